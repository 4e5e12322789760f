// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// File formats: 16-bit PCM WAV, binary mel spectrograms, JSON-lines
// manifests, and the versioned checkpoint container.

#ifndef SPECADAPT_IO_H_
#define SPECADAPT_IO_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "specadapt/mel-frontend.h"
#include "specadapt/nn.h"

namespace specadapt {

// Mono 16-bit PCM WAV. Samples are scaled to [-1, 1).
std::vector<double> ReadWavMono16(const std::string& path, int* sample_rate);
void WriteWavMono16(const std::string& path, std::span<const double> samples,
                    int sample_rate);

// Binary mel container: magic, version, n_mels, L, config hash, then
// row-major float32 values.
void WriteMelBin(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram ReadMelBin(const std::string& path, const MelConfig& config,
                          bool check_hash = true);

struct ManifestEntry {
  std::string id;
  std::string text;  // space-separated syllables
  std::optional<std::string> audio_path;
  char domain = 'A';
};

std::vector<ManifestEntry> ReadManifest(const std::string& path);
void WriteManifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries);

struct Checkpoint {
  std::string component;   // "enhancer" | "asr"
  std::string config_json;
  std::vector<std::pair<std::string, ParamMap>> groups;
  std::string extra_json;  // seed provenance, norm constants, step counters
};

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace specadapt

#endif  // SPECADAPT_IO_H_
