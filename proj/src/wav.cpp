// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/dsp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cmcr/common.hpp"

namespace cmcr::dsp {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}

void wr_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

constexpr uint16_t kFmtPcm = 1;
constexpr uint16_t kFmtFloat = 3;
constexpr uint16_t kFmtExtensible = 0xfffe;

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "wav: cannot open " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  require(raw.size() >= 44, "wav: " + path + ": file too small for a RIFF header");
  require(std::memcmp(raw.data(), "RIFF", 4) == 0 &&
              std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
          "wav: " + path + ": not a RIFF/WAVE file");

  uint16_t fmt_tag = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + pos);
    const uint32_t len = rd_u32(raw.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > raw.size()) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      require(len >= 16, "wav: " + path + ": truncated fmt chunk");
      fmt_tag = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      rate = rd_u32(raw.data() + body + 4);
      bits = rd_u16(raw.data() + body + 14);
      if (fmt_tag == kFmtExtensible) {
        require(len >= 40, "wav: " + path + ": truncated extensible fmt chunk");
        fmt_tag = rd_u16(raw.data() + body + 24);  // first GUID bytes
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = raw.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word aligned
  }

  require(have_fmt, "wav: " + path + ": missing fmt chunk");
  require(data != nullptr, "wav: " + path + ": missing data chunk");
  require(channels == 1 || channels == 2,
          "wav: " + path + ": unsupported channel count " + std::to_string(channels));
  require(rate > 0, "wav: " + path + ": bad sample rate");

  const bool pcm16 = fmt_tag == kFmtPcm && bits == 16;
  const bool f32 = fmt_tag == kFmtFloat && bits == 32;
  require(pcm16 || f32, "wav: " + path + ": unsupported codec (fmt tag " +
                            std::to_string(fmt_tag) + ", " + std::to_string(bits) +
                            " bit); only PCM16 and IEEE float32 are readable");

  const size_t bytes_per = (pcm16 ? 2u : 4u) * channels;
  const size_t n = data_len / bytes_per;
  require(n > 0, "wav: " + path + ": zero-length audio");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float acc = 0.0f;
    for (uint16_t c = 0; c < channels; ++c) {
      const uint8_t* p = data + (i * channels + c) * (pcm16 ? 2 : 4);
      if (pcm16) {
        const int16_t s = static_cast<int16_t>(rd_u16(p));
        acc += static_cast<float>(s) / 32768.0f;
      } else {
        float s;
        uint32_t u = rd_u32(p);
        std::memcpy(&s, &u, 4);
        acc += s;
      }
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

void save_wav(const std::string& path, const Waveform& w) {
  require(!w.samples.empty(), "wav: refusing to write zero-length audio");
  require(w.sample_rate > 0, "wav: bad sample rate");
  std::vector<uint8_t> b;
  b.reserve(44 + w.samples.size() * 2);
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wr_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(b, 16);
  wr_u16(b, kFmtPcm);
  wr_u16(b, 1);
  wr_u32(b, static_cast<uint32_t>(w.sample_rate));
  wr_u32(b, static_cast<uint32_t>(w.sample_rate) * 2);
  wr_u16(b, 2);
  wr_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wr_u32(b, data_len);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int v = std::clamp(static_cast<int>(std::lrintf(c * 32768.0f)), -32768, 32767);
    wr_u16(b, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "wav: cannot write " + path);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  require(f.good(), "wav: short write to " + path);
}

Waveform ingest_wav(const std::string& path) {
  Waveform w = load_wav(path);
  if (w.sample_rate != kCanonicalRate) w = resample(w, kCanonicalRate);
  return w;
}

}  // namespace cmcr::dsp
