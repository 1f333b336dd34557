#include "nrfc/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace nrfc {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioClip::AudioClip(Eigen::VectorXd samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  require(sample_rate > 0, ErrorCode::kInvalidArgument, "sample rate must be positive");
  require(samples_.allFinite(), ErrorCode::kNumerical, "audio samples must be finite");
}

AudioClip AudioClip::zeros(double duration_s, int sample_rate) {
  return AudioClip(Eigen::VectorXd::Zero(sample_count(duration_s, sample_rate)), sample_rate);
}

Eigen::Index sample_count(double duration_s, int sample_rate) {
  require(duration_s > 0.0, ErrorCode::kInvalidArgument, "duration must be positive");
  require(sample_rate > 0, ErrorCode::kInvalidArgument, "sample rate must be positive");
  return static_cast<Eigen::Index>(std::llround(duration_s * sample_rate));
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::kFormat, "not a RIFF/WAVE file: " + path.string());
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, format = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) fail(ErrorCode::kFormat, "truncated WAV chunk: " + path.string());
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) fail(ErrorCode::kFormat, "short fmt chunk: " + path.string());
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorCode::kFormat, "data chunk before fmt chunk: " + path.string());
      if (channels != 1) fail(ErrorCode::kUnsupported, "non-mono WAV file: " + path.string());
      if (format != 1 || bits != 16) {
        fail(ErrorCode::kFormat, "unsupported encoding (need 16-bit PCM): " + path.string());
      }
      const std::size_t n = len / 2;
      Eigen::VectorXd samples(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        samples[static_cast<Eigen::Index>(i)] = raw / 32768.0;
      }
      return AudioClip(std::move(samples), static_cast<int>(rate));
    }
    pos = body + len + (len & 1);
  }
  fail(ErrorCode::kFormat, "WAV file has no data chunk: " + path.string());
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto n = static_cast<std::uint32_t>(clip.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  put_tag(out, "RIFF");
  put_u32(out, 36 + 2 * n);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, 2 * n);
  for (Eigen::Index i = 0; i < clip.size(); ++i) {
    const double x = std::clamp(clip.samples()[i], -1.0, 1.0);
    const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::kIo, "cannot write WAV file: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) fail(ErrorCode::kIo, "write failed: " + path.string());
}

double rms(const AudioClip& clip) {
  require(!clip.empty(), ErrorCode::kInvalidArgument, "rms of an empty clip");
  return std::sqrt(clip.samples().squaredNorm() / static_cast<double>(clip.size()));
}

double peak(const AudioClip& clip) {
  return clip.empty() ? 0.0 : clip.samples().cwiseAbs().maxCoeff();
}

AudioClip time_shift(const AudioClip& clip, double shift_seconds) {
  require(shift_seconds >= 0.0 && shift_seconds <= clip.duration() + 1e-12,
          ErrorCode::kInvalidArgument, "time shift must lie in [0, duration]");
  const Eigen::Index n = clip.size();
  if (n == 0) return clip;
  const auto k = static_cast<Eigen::Index>(std::llround(shift_seconds * clip.sample_rate())) % n;
  Eigen::VectorXd out(n);
  out.tail(n - k) = clip.samples().head(n - k);
  out.head(k) = clip.samples().tail(k);
  return AudioClip(std::move(out), clip.sample_rate());
}

AudioClip scale(const AudioClip& clip, double gain) {
  return AudioClip(clip.samples() * gain, clip.sample_rate());
}

}  // namespace nrfc
