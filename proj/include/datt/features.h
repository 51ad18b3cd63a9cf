// Log-Mel filterbank front end, feature/WAV file formats, and the synthetic
// speaker corpus used for desk-scale training.

#ifndef DATT_FEATURES_H_
#define DATT_FEATURES_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "datt/tensor.h"

namespace datt {

// T x F log-Mel energies, row-major (one row per 10 ms frame).
class FbankMatrix {
 public:
  FbankMatrix() = default;
  FbankMatrix(std::size_t frames, std::size_t bins);
  FbankMatrix(std::size_t frames, std::size_t bins, std::vector<float> values);

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  float at(std::size_t t, std::size_t f) const { return values_[t * bins_ + f]; }
  float& at(std::size_t t, std::size_t f) { return values_[t * bins_ + f]; }
  std::span<const float> row(std::size_t t) const { return {values_.data() + t * bins_, bins_}; }
  std::span<float> row(std::size_t t) { return {values_.data() + t * bins_, bins_}; }
  const std::vector<float>& values() const { return values_; }

  // Per-bin mean over frames, accumulated in double.
  std::vector<double> MeanFrame() const;
  // Rows [begin, end).
  FbankMatrix Rows(std::size_t begin, std::size_t end) const;

  bool operator==(const FbankMatrix&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<float> values_;
};

struct FbankOptions {
  int sample_rate = 16000;
  std::size_t frame_length = 400;  // 25 ms
  std::size_t frame_shift = 160;   // 10 ms
  std::size_t fft_size = 512;
  std::size_t mel_bins = 64;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;
  bool preemphasis = false;  // per-frame, coefficient 0.97
};

// HTK mel scale.
double HzToMel(double hz);
double MelToHz(double mel);

// mel_bins x (fft_size / 2 + 1) triangular weights; row m peaks at the m-th
// interior point of an even mel grid spanning [low_hz, high_hz].
std::vector<std::vector<double>> MelFilterbank(const FbankOptions& options);

// samples are mono PCM scaled to [-1, 1). FormatError for a sample rate other
// than options.sample_rate, InputError when shorter than one frame.
FbankMatrix ComputeFbank(std::span<const float> samples, int sample_rate,
                         const FbankOptions& options = {});

// Per-bin mean and variance normalization over frames (off by default).
void ApplyCmvn(FbankMatrix& m);

enum class CropMode { kRandomCrop, kEvalPad };

// kRandomCrop: uniform start when longer than target, padded like kEvalPad
// when shorter. kEvalPad: appends copies of the mean frame when shorter; keeps
// the first target frames when longer. rng is only used by kRandomCrop.
FbankMatrix PadOrCrop(const FbankMatrix& m, std::size_t target, CropMode mode, Rng* rng);

// ---------------------------------------------------------------------------
// Files.

struct Wave {
  int sample_rate = 0;
  std::vector<float> samples;  // scaled by 1/32768
};

// RIFF/WAVE, 16-bit signed PCM, mono. Other encodings raise FormatError.
Wave ReadWav(const std::string& path);
void WriteWav(const std::string& path, std::span<const float> samples, int sample_rate);

// "FBNK" | u32 T | u32 F | u32 reserved | T*F little-endian f32, row-major.
std::string EncodeFbank(const FbankMatrix& m);
FbankMatrix DecodeFbank(const std::string& bytes, const std::string& origin);
FbankMatrix ReadFbank(const std::string& path);
void WriteFbank(const std::string& path, const FbankMatrix& m);

// ---------------------------------------------------------------------------
// Synthetic corpus, generated directly in FBank space.

struct CorpusConfig {
  std::size_t num_speakers = 10;
  std::size_t utts_per_speaker = 12;
  std::size_t mel_bins = 64;
  double sigma = 0.5;  // i.i.d. frame noise
  double min_seconds = 2.0;
  double max_seconds = 8.0;
  // Peak amplitude range of the per-utterance sinusoidal gain modulation.
  double modulation_min = 0.5;
  double modulation_max = 1.5;
  std::uint64_t seed = 7;
  // Offset mixed into every derived stream; lets a held-out corpus reuse the
  // speaker templates of `seed` while drawing fresh utterances.
  std::uint64_t utterance_salt = 0;
};

struct Utterance {
  std::string id;
  int speaker = 0;
  FbankMatrix features;
};

struct Corpus {
  std::size_t num_speakers = 0;
  std::vector<Utterance> utterances;
  // Indices into utterances, grouped by speaker.
  std::vector<std::vector<std::size_t>> by_speaker;
  // Speaker spectral templates (synthetic corpora only).
  std::vector<std::vector<double>> templates;
};

// Mixes a seed with stream coordinates (splitmix64 finalizer chain), so every
// speaker and utterance draws from its own reproducible stream.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Frames produced by ComputeFbank for a clip of this many seconds.
std::size_t FramesForSeconds(double seconds, const FbankOptions& options = {});

// ConfigError unless num_speakers >= 2 and utts_per_speaker >= 2.
Corpus GenerateSyntheticCorpus(const CorpusConfig& config);

// Groups utterances by speaker and validates ids.
void IndexCorpus(Corpus& corpus);

// Corpus directory layout: "corpus.txt" with one "speaker relative.fbnk" line
// per utterance, next to the feature files.
void SaveCorpus(const Corpus& corpus, const std::string& dir);
Corpus LoadCorpus(const std::string& dir);

}  // namespace datt

#endif  // DATT_FEATURES_H_
