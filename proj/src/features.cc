#include "datt/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "datt/error.h"
#include "datt/io.h"

namespace datt {

FbankMatrix::FbankMatrix(std::size_t frames, std::size_t bins)
    : frames_(frames), bins_(bins), values_(frames * bins, 0.0f) {}

FbankMatrix::FbankMatrix(std::size_t frames, std::size_t bins, std::vector<float> values)
    : frames_(frames), bins_(bins), values_(std::move(values)) {
  if (values_.size() != frames * bins) {
    throw ShapeError("fbank: " + std::to_string(values_.size()) + " values for " +
                     std::to_string(frames) + "x" + std::to_string(bins));
  }
}

std::vector<double> FbankMatrix::MeanFrame() const {
  std::vector<double> mean(bins_, 0.0);
  for (std::size_t t = 0; t < frames_; ++t) {
    for (std::size_t f = 0; f < bins_; ++f) mean[f] += at(t, f);
  }
  for (double& m : mean) m /= static_cast<double>(frames_);
  return mean;
}

FbankMatrix FbankMatrix::Rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > frames_) throw InputError("fbank: row range out of bounds");
  return FbankMatrix(end - begin, bins_,
                     std::vector<float>(values_.begin() + static_cast<long>(begin * bins_),
                                        values_.begin() + static_cast<long>(end * bins_)));
}

// ---------------------------------------------------------------------------
// Front end.

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> MelFilterbank(const FbankOptions& o) {
  const std::size_t num_fft_bins = o.fft_size / 2 + 1;
  const double lo = HzToMel(o.low_hz), hi = HzToMel(o.high_hz);
  const double step = (hi - lo) / static_cast<double>(o.mel_bins + 1);
  std::vector<std::vector<double>> bank(o.mel_bins, std::vector<double>(num_fft_bins, 0.0));
  for (std::size_t m = 0; m < o.mel_bins; ++m) {
    const double left = lo + step * static_cast<double>(m);
    const double center = left + step, right = center + step;
    for (std::size_t k = 0; k < num_fft_bins; ++k) {
      const double hz = static_cast<double>(k) * o.sample_rate / static_cast<double>(o.fft_size);
      const double mel = HzToMel(hz);
      if (mel > left && mel < right) {
        bank[m][k] = mel <= center ? (mel - left) / step : (right - mel) / step;
      }
    }
  }
  return bank;
}

namespace {

// FFTW planning is not thread-safe; execution with a shared plan is.
std::mutex g_fftw_mutex;

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    // ESTIMATE keeps the chosen algorithm, and therefore the rounding,
    // independent of timing.
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void PowerSpectrum(std::vector<double>& power) {
    fftw_execute(plan_);
    power.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      power[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

FbankMatrix ComputeFbank(std::span<const float> samples, int sample_rate,
                         const FbankOptions& o) {
  if (sample_rate != o.sample_rate) {
    throw FormatError("fbank: sample rate " + std::to_string(sample_rate) + ", expected " +
                      std::to_string(o.sample_rate));
  }
  if (samples.size() < o.frame_length) {
    throw InputError("fbank: " + std::to_string(samples.size()) +
                     " samples is shorter than one frame (" + std::to_string(o.frame_length) +
                     ")");
  }
  if (o.fft_size < o.frame_length) throw ConfigError("fbank: fft_size below frame_length");

  const std::size_t frames = 1 + (samples.size() - o.frame_length) / o.frame_shift;
  const auto bank = MelFilterbank(o);
  std::vector<double> window(o.frame_length);
  for (std::size_t i = 0; i < o.frame_length; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(o.frame_length));
  }

  RealFft fft(o.fft_size);
  std::vector<double> frame(o.frame_length), power;
  FbankMatrix out(frames, o.mel_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = samples.data() + t * o.frame_shift;
    for (std::size_t i = 0; i < o.frame_length; ++i) frame[i] = src[i];
    if (o.preemphasis) {
      for (std::size_t i = o.frame_length - 1; i > 0; --i) frame[i] -= 0.97 * frame[i - 1];
      frame[0] -= 0.97 * frame[0];
    }
    double* in = fft.input();
    for (std::size_t i = 0; i < o.frame_length; ++i) in[i] = frame[i] * window[i];
    std::fill(in + o.frame_length, in + o.fft_size, 0.0);
    fft.PowerSpectrum(power);
    for (std::size_t m = 0; m < o.mel_bins; ++m) {
      double energy = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) energy += bank[m][k] * power[k];
      out.at(t, m) = static_cast<float>(std::log(std::max(energy, o.log_floor)));
    }
  }
  return out;
}

void ApplyCmvn(FbankMatrix& m) {
  const std::vector<double> mean = m.MeanFrame();
  std::vector<double> var(m.bins(), 0.0);
  for (std::size_t t = 0; t < m.frames(); ++t) {
    for (std::size_t f = 0; f < m.bins(); ++f) {
      const double d = m.at(t, f) - mean[f];
      var[f] += d * d;
    }
  }
  for (std::size_t f = 0; f < m.bins(); ++f) {
    const double inv = 1.0 / std::sqrt(var[f] / static_cast<double>(m.frames()) + 1e-10);
    for (std::size_t t = 0; t < m.frames(); ++t) {
      m.at(t, f) = static_cast<float>((m.at(t, f) - mean[f]) * inv);
    }
  }
}

FbankMatrix PadOrCrop(const FbankMatrix& m, std::size_t target, CropMode mode, Rng* rng) {
  if (target == 0) throw InputError("pad_or_crop: target must be positive");
  if (m.frames() == 0) throw InputError("pad_or_crop: empty feature matrix");
  if (m.frames() == target) return m;
  if (m.frames() > target) {
    std::size_t start = 0;
    if (mode == CropMode::kRandomCrop) {
      if (rng == nullptr) throw InputError("pad_or_crop: random crop needs an rng");
      start = std::uniform_int_distribution<std::size_t>(0, m.frames() - target)(*rng);
    }
    return m.Rows(start, start + target);
  }
  const std::vector<double> mean = m.MeanFrame();
  std::vector<float> values = m.values();
  values.reserve(target * m.bins());
  for (std::size_t t = m.frames(); t < target; ++t) {
    for (double v : mean) values.push_back(static_cast<float>(v));
  }
  return FbankMatrix(target, m.bins(), std::move(values));
}

// ---------------------------------------------------------------------------
// WAV.

namespace {

struct Reader {
  const std::string& bytes;
  const std::string& origin;
  std::size_t pos = 0;

  const char* Take(std::size_t n) {
    if (pos + n > bytes.size()) throw FormatError(origin + ": truncated");
    const char* p = bytes.data() + pos;
    pos += n;
    return p;
  }
  template <typename T>
  T Get() {
    return LoadLe<T>(Take(sizeof(T)));
  }
};

}  // namespace

Wave ReadWav(const std::string& path) {
  const std::string bytes = ReadFile(path);
  Reader r{bytes, path};
  if (std::string_view(r.Take(4), 4) != "RIFF") throw FormatError(path + ": not a RIFF file");
  r.Get<std::uint32_t>();
  if (std::string_view(r.Take(4), 4) != "WAVE") throw FormatError(path + ": not a WAVE file");

  bool have_fmt = false;
  Wave wave;
  while (r.pos + 8 <= bytes.size()) {
    const std::string_view id(r.Take(4), 4);
    const std::uint32_t size = r.Get<std::uint32_t>();
    if (id == "fmt ") {
      if (size < 16) throw FormatError(path + ": short fmt chunk");
      const std::size_t end = r.pos + size;
      const auto format = r.Get<std::uint16_t>();
      const auto channels = r.Get<std::uint16_t>();
      wave.sample_rate = static_cast<int>(r.Get<std::uint32_t>());
      r.Get<std::uint32_t>();  // byte rate
      r.Get<std::uint16_t>();  // block align
      const auto bits = r.Get<std::uint16_t>();
      if (format != 1 || bits != 16) throw FormatError(path + ": only 16-bit PCM is supported");
      if (channels != 1) throw FormatError(path + ": expected mono audio");
      r.pos = end;
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(path + ": data chunk before fmt chunk");
      const std::size_t count = size / 2;
      const char* p = r.Take(count * 2);
      wave.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        wave.samples[i] = static_cast<float>(LoadLe<std::int16_t>(p + 2 * i)) / 32768.0f;
      }
      return wave;
    } else {
      r.Take(size + (size & 1));
    }
  }
  throw FormatError(path + ": no data chunk");
}

void WriteWav(const std::string& path, std::span<const float> samples, int sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  AppendLe<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  AppendLe<std::uint32_t>(out, 16);
  AppendLe<std::uint16_t>(out, 1);
  AppendLe<std::uint16_t>(out, 1);
  AppendLe<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  AppendLe<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate) * 2);
  AppendLe<std::uint16_t>(out, 2);
  AppendLe<std::uint16_t>(out, 16);
  out += "data";
  AppendLe<std::uint32_t>(out, data_bytes);
  for (float s : samples) {
    const float scaled = std::clamp(s * 32768.0f, -32768.0f, 32767.0f);
    AppendLe<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(scaled)));
  }
  WriteFileAtomic(path, out);
}

// ---------------------------------------------------------------------------
// FBNK.

std::string EncodeFbank(const FbankMatrix& m) {
  std::string out;
  out.reserve(16 + m.values().size() * 4);
  out += "FBNK";
  AppendLe<std::uint32_t>(out, static_cast<std::uint32_t>(m.frames()));
  AppendLe<std::uint32_t>(out, static_cast<std::uint32_t>(m.bins()));
  AppendLe<std::uint32_t>(out, 0);
  for (float v : m.values()) AppendLe<float>(out, v);
  return out;
}

FbankMatrix DecodeFbank(const std::string& bytes, const std::string& origin) {
  Reader r{bytes, origin};
  if (std::string_view(r.Take(4), 4) != "FBNK") throw FormatError(origin + ": bad FBNK magic");
  const std::uint32_t frames = r.Get<std::uint32_t>();
  const std::uint32_t bins = r.Get<std::uint32_t>();
  r.Get<std::uint32_t>();
  if (frames == 0 || bins == 0) throw FormatError(origin + ": empty feature matrix");
  const std::size_t count = static_cast<std::size_t>(frames) * bins;
  if (bytes.size() - r.pos != count * 4) {
    throw FormatError(origin + ": payload size does not match " + std::to_string(frames) + "x" +
                      std::to_string(bins));
  }
  std::vector<float> values(count);
  std::memcpy(values.data(), r.Take(count * 4), count * 4);
  for (float v : values) {
    if (!std::isfinite(v)) throw FormatError(origin + ": non-finite feature value");
  }
  return FbankMatrix(frames, bins, std::move(values));
}

FbankMatrix ReadFbank(const std::string& path) { return DecodeFbank(ReadFile(path), path); }

void WriteFbank(const std::string& path, const FbankMatrix& m) {
  WriteFileAtomic(path, EncodeFbank(m));
}

// ---------------------------------------------------------------------------
// Synthetic corpus.

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return SplitMix64(SplitMix64(SplitMix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

std::size_t FramesForSeconds(double seconds, const FbankOptions& o) {
  const auto samples = static_cast<std::size_t>(std::llround(seconds * o.sample_rate));
  if (samples < o.frame_length) return 0;
  return 1 + (samples - o.frame_length) / o.frame_shift;
}

Corpus GenerateSyntheticCorpus(const CorpusConfig& c) {
  if (c.num_speakers < 2) throw ConfigError("corpus: num_speakers must be at least 2");
  if (c.utts_per_speaker < 2) throw ConfigError("corpus: utts_per_speaker must be at least 2");
  if (c.mel_bins == 0) throw ConfigError("corpus: mel_bins must be positive");
  if (!(c.sigma >= 0.0)) throw ConfigError("corpus: sigma must be non-negative");
  if (!(c.min_seconds > 0.0 && c.min_seconds <= c.max_seconds)) {
    throw ConfigError("corpus: need 0 < min_seconds <= max_seconds");
  }
  if (FramesForSeconds(c.min_seconds) == 0) throw ConfigError("corpus: min_seconds too short");

  constexpr std::uint64_t kTemplateStream = 1;
  constexpr std::uint64_t kUtteranceStream = 2;
  Corpus corpus;
  corpus.num_speakers = c.num_speakers;
  corpus.templates.resize(c.num_speakers);
  for (std::size_t s = 0; s < c.num_speakers; ++s) {
    Rng rng(DeriveSeed(c.seed, kTemplateStream, s));
    std::normal_distribution<double> normal(0.0, 1.0);
    corpus.templates[s].resize(c.mel_bins);
    for (double& v : corpus.templates[s]) v = normal(rng);
  }

  for (std::size_t s = 0; s < c.num_speakers; ++s) {
    for (std::size_t u = 0; u < c.utts_per_speaker; ++u) {
      Rng rng(DeriveSeed(c.seed ^ SplitMix64(c.utterance_salt), kUtteranceStream,
                         s * c.utts_per_speaker + u));
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      std::normal_distribution<double> normal(0.0, 1.0);
      const double seconds = c.min_seconds + (c.max_seconds - c.min_seconds) * uniform(rng);
      const std::size_t frames = FramesForSeconds(seconds);
      const double rate_hz = 0.5 + 2.5 * uniform(rng);
      const double phase = 2.0 * std::numbers::pi * uniform(rng);
      const double depth = c.modulation_min + (c.modulation_max - c.modulation_min) * uniform(rng);

      // Gain envelope, centred so it leaves the utterance mean untouched.
      std::vector<double> gain(frames);
      double gain_mean = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        gain[t] = depth * std::sin(2.0 * std::numbers::pi * rate_hz * 0.01 *
                                       static_cast<double>(t) + phase);
        gain_mean += gain[t];
      }
      gain_mean /= static_cast<double>(frames);

      FbankMatrix m(frames, c.mel_bins);
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t f = 0; f < c.mel_bins; ++f) {
          const double noise = c.sigma > 0.0 ? c.sigma * normal(rng) : 0.0;
          m.at(t, f) =
              static_cast<float>(corpus.templates[s][f] + (gain[t] - gain_mean) + noise);
        }
      }
      Utterance utt;
      utt.id = "spk" + std::to_string(s) + "_utt" + std::to_string(u);
      utt.speaker = static_cast<int>(s);
      utt.features = std::move(m);
      corpus.utterances.push_back(std::move(utt));
    }
  }
  IndexCorpus(corpus);
  return corpus;
}

void IndexCorpus(Corpus& corpus) {
  int max_speaker = -1;
  for (const Utterance& u : corpus.utterances) {
    if (u.speaker < 0) throw ConfigError("corpus: negative speaker index in " + u.id);
    max_speaker = std::max(max_speaker, u.speaker);
  }
  corpus.num_speakers = std::max<std::size_t>(corpus.num_speakers,
                                              static_cast<std::size_t>(max_speaker + 1));
  corpus.by_speaker.assign(corpus.num_speakers, {});
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    corpus.by_speaker[static_cast<std::size_t>(corpus.utterances[i].speaker)].push_back(i);
  }
}

void SaveCorpus(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream index;
  for (const Utterance& u : corpus.utterances) {
    const std::string file = u.id + ".fbnk";
    WriteFbank((std::filesystem::path(dir) / file).string(), u.features);
    index << u.speaker << ' ' << file << '\n';
  }
  WriteFileAtomic((std::filesystem::path(dir) / "corpus.txt").string(), index.str());
}

Corpus LoadCorpus(const std::string& dir) {
  const std::string index_path = (std::filesystem::path(dir) / "corpus.txt").string();
  std::istringstream index(ReadFile(index_path));
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Utterance u;
    std::string file, extra;
    if (!(fields >> u.speaker >> file) || (fields >> extra)) {
      throw FormatError(index_path + ":" + std::to_string(line_no) +
                        ": expected \"speaker file\"");
    }
    u.id = std::filesystem::path(file).stem().string();
    u.features = ReadFbank((std::filesystem::path(dir) / file).string());
    corpus.utterances.push_back(std::move(u));
  }
  if (corpus.utterances.empty()) throw FormatError(index_path + ": no utterances");
  IndexCorpus(corpus);
  return corpus;
}

}  // namespace datt
