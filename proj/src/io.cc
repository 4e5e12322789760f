// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/io.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace specadapt {

namespace {

using json = nlohmann::json;

void WriteU32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void WriteU64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t ReadU32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t ReadU64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void WriteStr(std::ostream& os, const std::string& s) {
  WriteU64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string ReadStr(std::istream& is) {
  std::uint64_t n = ReadU64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream OpenIn(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

constexpr std::uint32_t kMelMagic = 0x4253454dU;   // "MESB"
constexpr std::uint32_t kCkptMagic = 0x4b435053U;  // "SPCK"

}  // namespace

std::vector<double> ReadWavMono16(const std::string& path, int* sample_rate) {
  auto is = OpenIn(path);
  char riff[4], wave[4];
  is.read(riff, 4);
  ReadU32(is);  // file size
  is.read(wave, 4);
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE file: " + path);
  }
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<double> samples;
  bool got_fmt = false;
  while (is) {
    char tag[4];
    is.read(tag, 4);
    if (!is) break;
    std::uint32_t size = ReadU32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::uint16_t format = 0;
      is.read(reinterpret_cast<char*>(&format), 2);
      is.read(reinterpret_cast<char*>(&channels), 2);
      rate = ReadU32(is);
      ReadU32(is);  // byte rate
      std::uint16_t block = 0;
      is.read(reinterpret_cast<char*>(&block), 2);
      is.read(reinterpret_cast<char*>(&bits), 2);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      if (format != 1) throw std::runtime_error("only PCM WAV supported: " + path);
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw std::runtime_error("WAV data before fmt chunk: " + path);
      if (bits != 16) throw std::runtime_error("only 16-bit WAV supported: " + path);
      if (channels != 1) throw std::runtime_error("only mono WAV supported: " + path);
      std::uint32_t count = size / 2;
      samples.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        std::int16_t s = 0;
        is.read(reinterpret_cast<char*>(&s), 2);
        samples[i] = static_cast<double>(s) / 32768.0;
      }
      break;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (samples.empty()) throw std::runtime_error("WAV has no data chunk: " + path);
  if (sample_rate) *sample_rate = static_cast<int>(rate);
  return samples;
}

void WriteWavMono16(const std::string& path, std::span<const double> samples,
                    int sample_rate) {
  auto os = OpenOut(path);
  std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  WriteU32(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  WriteU32(os, 16);
  std::uint16_t format = 1, channels = 1, bits = 16;
  os.write(reinterpret_cast<const char*>(&format), 2);
  os.write(reinterpret_cast<const char*>(&channels), 2);
  WriteU32(os, static_cast<std::uint32_t>(sample_rate));
  WriteU32(os, static_cast<std::uint32_t>(sample_rate * 2));
  std::uint16_t block = 2;
  os.write(reinterpret_cast<const char*>(&block), 2);
  os.write(reinterpret_cast<const char*>(&bits), 2);
  os.write("data", 4);
  WriteU32(os, data_size);
  for (double v : samples) {
    double clamped = std::clamp(v, -1.0, 32767.0 / 32768.0);
    std::int16_t s = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
    os.write(reinterpret_cast<const char*>(&s), 2);
  }
}

void WriteMelBin(const std::string& path, const MelSpectrogram& mel) {
  auto os = OpenOut(path);
  WriteU32(os, kMelMagic);
  WriteU32(os, 1);
  WriteU32(os, static_cast<std::uint32_t>(mel.bands()));
  WriteU32(os, static_cast<std::uint32_t>(mel.frames()));
  WriteU64(os, mel.config.Hash());
  for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
    float f = static_cast<float>(mel.values[i]);
    os.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

MelSpectrogram ReadMelBin(const std::string& path, const MelConfig& config,
                          bool check_hash) {
  auto is = OpenIn(path);
  if (ReadU32(is) != kMelMagic) throw std::runtime_error("bad mel magic: " + path);
  if (ReadU32(is) != 1) throw std::runtime_error("unsupported mel version: " + path);
  int n_mels = static_cast<int>(ReadU32(is));
  int L = static_cast<int>(ReadU32(is));
  std::uint64_t hash = ReadU64(is);
  if (n_mels != config.n_mels) {
    throw std::runtime_error("mel band count mismatch in " + path);
  }
  if (check_hash && hash != config.Hash()) {
    throw std::runtime_error("mel config hash mismatch in " + path);
  }
  Tensor t({n_mels, L});
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    float f = 0;
    is.read(reinterpret_cast<char*>(&f), sizeof(f));
    t[i] = static_cast<double>(f);
  }
  if (!is) throw std::runtime_error("truncated mel file: " + path);
  return MakeMelSpectrogram(std::move(t), config);
}

std::vector<ManifestEntry> ReadManifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) +
                               " is not valid JSON: " + path);
    }
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.text = j.at("text").get<std::string>();
    if (j.contains("audio_path")) e.audio_path = j["audio_path"].get<std::string>();
    std::string d = j.at("domain").get<std::string>();
    if (d.size() != 1) throw std::runtime_error("manifest domain must be one char");
    e.domain = d[0];
    out.push_back(std::move(e));
  }
  return out;
}

void WriteManifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries) {
  auto os = OpenOut(path);
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    j["text"] = e.text;
    if (e.audio_path) j["audio_path"] = *e.audio_path;
    j["domain"] = std::string(1, e.domain);
    os << j.dump() << "\n";
  }
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  auto os = OpenOut(path);
  WriteU32(os, kCkptMagic);
  WriteU32(os, 1);
  WriteStr(os, ckpt.component);
  WriteStr(os, ckpt.config_json);
  WriteStr(os, ckpt.extra_json);
  WriteU32(os, static_cast<std::uint32_t>(ckpt.groups.size()));
  for (const auto& [gname, params] : ckpt.groups) {
    WriteStr(os, gname);
    WriteU32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params.items()) {
      WriteStr(os, name);
      WriteU32(os, static_cast<std::uint32_t>(t.ndim()));
      for (int d : t.shape()) WriteU32(os, static_cast<std::uint32_t>(d));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
  }
}

Checkpoint LoadCheckpoint(const std::string& path) {
  auto is = OpenIn(path);
  if (ReadU32(is) != kCkptMagic) throw std::runtime_error("bad checkpoint magic: " + path);
  if (ReadU32(is) != 1) throw std::runtime_error("unsupported checkpoint version: " + path);
  Checkpoint ckpt;
  ckpt.component = ReadStr(is);
  ckpt.config_json = ReadStr(is);
  ckpt.extra_json = ReadStr(is);
  std::uint32_t n_groups = ReadU32(is);
  for (std::uint32_t g = 0; g < n_groups; ++g) {
    std::string gname = ReadStr(is);
    ParamMap pm;
    std::uint32_t n_tensors = ReadU32(is);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      std::string name = ReadStr(is);
      std::uint32_t ndim = ReadU32(is);
      std::vector<int> shape(ndim);
      for (auto& d : shape) d = static_cast<int>(ReadU32(is));
      Tensor t(shape);
      is.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
      pm.Add(name, std::move(t));
    }
    ckpt.groups.emplace_back(std::move(gname), std::move(pm));
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

}  // namespace specadapt
