#include "datt/features.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "datt/error.h"
#include "datt/io.h"

namespace datt {
namespace {

std::vector<float> Sine(double hz, std::size_t n, double amplitude = 0.5) {
  std::vector<float> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0));
  }
  return s;
}

std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("datt_features_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(Fbank, OneSecondGivesNinetyEightFrames) {
  const auto m = ComputeFbank(Sine(440, 16000), 16000);
  EXPECT_EQ(m.frames(), 98u);
  EXPECT_EQ(m.bins(), 64u);
  for (float v : m.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Fbank, SilenceHitsTheLogFloor) {
  const std::vector<float> zeros(4000, 0.0f);
  const auto m = ComputeFbank(zeros, 16000);
  const float floor = static_cast<float>(std::log(1e-10));
  for (float v : m.values()) EXPECT_EQ(v, floor);
}

TEST(Fbank, SinePeaksInFilterCentredNearestItsFrequency) {
  // Independent centre computation: HTK mel, 66 evenly spaced points on
  // [0, 8000] Hz, filters centred on the interior 64.
  const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  auto centre = [&](int m) {
    const double mel = top * (m + 1) / 65.0;
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  };
  for (double hz : {1000.0, 300.0, 2500.0}) {
    int nearest = 0;
    for (int m = 1; m < 64; ++m) {
      if (std::abs(centre(m) - hz) < std::abs(centre(nearest) - hz)) nearest = m;
    }
    const auto fb = ComputeFbank(Sine(hz, 16000), 16000);
    for (std::size_t t = 0; t < fb.frames(); ++t) {
      const auto row = fb.row(t);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      ASSERT_EQ(best, nearest) << hz << " Hz, frame " << t;
    }
  }
}

TEST(Fbank, RejectsWrongRateAndShortAudio) {
  EXPECT_THROW(ComputeFbank(Sine(440, 16000), 8000), FormatError);
  EXPECT_THROW(ComputeFbank(Sine(440, 399), 16000), InputError);
  EXPECT_EQ(ComputeFbank(Sine(440, 400), 16000).frames(), 1u);
}

TEST(Fbank, DroppingOneHopDropsExactlyTheFirstFrame) {
  Rng rng(3);
  std::normal_distribution<float> normal(0.0f, 0.1f);
  std::vector<float> audio(12345);
  for (float& s : audio) s = normal(rng);
  for (bool pre : {false, true}) {
    FbankOptions opts;
    opts.preemphasis = pre;
    const auto full = ComputeFbank(audio, 16000, opts);
    const auto shifted =
        ComputeFbank(std::span<const float>(audio).subspan(160), 16000, opts);
    ASSERT_EQ(shifted.frames() + 1, full.frames());
    EXPECT_EQ(shifted, full.Rows(1, full.frames()));
  }
}

TEST(Fbank, FilterbankRowsPeakAtOne) {
  const auto bank = MelFilterbank({});
  ASSERT_EQ(bank.size(), 64u);
  for (const auto& row : bank) {
    const double peak = *std::max_element(row.begin(), row.end());
    EXPECT_GT(peak, 0.5);
    EXPECT_LE(peak, 1.0);
  }
  EXPECT_NEAR(MelToHz(HzToMel(1234.5)), 1234.5, 1e-9);
}

TEST(Cmvn, ZeroMeanUnitVariancePerBin) {
  Rng rng(5);
  FbankMatrix m(50, 4);
  std::normal_distribution<float> normal(3.0f, 2.0f);
  for (std::size_t t = 0; t < 50; ++t)
    for (std::size_t f = 0; f < 4; ++f) m.at(t, f) = normal(rng);
  ApplyCmvn(m);
  const auto mean = m.MeanFrame();
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_NEAR(mean[f], 0.0, 1e-6);
    double var = 0.0;
    for (std::size_t t = 0; t < 50; ++t) var += m.at(t, f) * m.at(t, f);
    EXPECT_NEAR(var / 50.0, 1.0, 1e-5);
  }
}

FbankMatrix Ramp(std::size_t frames, std::size_t bins) {
  FbankMatrix m(frames, bins);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t f = 0; f < bins; ++f) m.at(t, f) = static_cast<float>(t * 0.01 + f);
  return m;
}

TEST(PadOrCrop, RandomCropStaysInBounds) {
  const auto m = Ramp(700, 3);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto c = PadOrCrop(m, 500, CropMode::kRandomCrop, &rng);
    ASSERT_EQ(c.frames(), 500u);
    const auto start = static_cast<std::size_t>(std::lround(c.at(0, 0) / 0.01));
    ASSERT_LE(start, 200u);
    EXPECT_EQ(c, m.Rows(start, start + 500));
  }
}

TEST(PadOrCrop, EvalPadAppendsTheMeanFrame) {
  const auto m = Ramp(400, 3);
  const auto p = PadOrCrop(m, 500, CropMode::kEvalPad, nullptr);
  ASSERT_EQ(p.frames(), 500u);
  EXPECT_EQ(p.Rows(0, 400), m);
  for (std::size_t f = 0; f < 3; ++f) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 400; ++t) mean += m.at(t, f);
    mean /= 400.0;
    for (std::size_t t = 400; t < 500; ++t) EXPECT_EQ(p.at(t, f), static_cast<float>(mean));
  }
}

TEST(PadOrCrop, ExactLengthIsUnchanged) {
  const auto m = Ramp(500, 2);
  Rng rng(2);
  EXPECT_EQ(PadOrCrop(m, 500, CropMode::kEvalPad, nullptr), m);
  EXPECT_EQ(PadOrCrop(m, 500, CropMode::kRandomCrop, &rng), m);
}

TEST(PadOrCrop, ShortRandomCropFallsBackToPadding) {
  const auto m = Ramp(120, 2);
  Rng rng(3);
  EXPECT_EQ(PadOrCrop(m, 300, CropMode::kRandomCrop, &rng),
            PadOrCrop(m, 300, CropMode::kEvalPad, nullptr));
  EXPECT_THROW(PadOrCrop(m, 0, CropMode::kEvalPad, nullptr), InputError);
}

TEST(PadOrCrop, PaddingPreservesTheMeanFrame) {
  Rng rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 499);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  for (int trial = 0; trial < 50; ++trial) {
    FbankMatrix m(len(rng), 5);
    for (std::size_t t = 0; t < m.frames(); ++t)
      for (std::size_t f = 0; f < 5; ++f) m.at(t, f) = normal(rng);
    const auto before = m.MeanFrame();
    const auto after = PadOrCrop(m, 500, CropMode::kEvalPad, nullptr).MeanFrame();
    // Pad rows hold the mean rounded to float; that rounding is the only slack.
    for (std::size_t f = 0; f < 5; ++f) EXPECT_NEAR(after[f], before[f], 1e-6);
  }
}

TEST(Corpus, SameSeedIsBitIdentical) {
  CorpusConfig c;
  c.num_speakers = 3;
  c.utts_per_speaker = 3;
  const Corpus a = GenerateSyntheticCorpus(c);
  const Corpus b = GenerateSyntheticCorpus(c);
  ASSERT_EQ(a.utterances.size(), 9u);
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    EXPECT_EQ(a.utterances[i].features, b.utterances[i].features);
    EXPECT_EQ(a.utterances[i].speaker, b.utterances[i].speaker);
  }
  c.seed = 8;
  EXPECT_NE(GenerateSyntheticCorpus(c).utterances[0].features, a.utterances[0].features);
}

TEST(Corpus, DurationsAndLayout) {
  CorpusConfig c;
  const Corpus corpus = GenerateSyntheticCorpus(c);
  EXPECT_EQ(corpus.by_speaker.size(), 10u);
  for (const auto& utts : corpus.by_speaker) EXPECT_EQ(utts.size(), 12u);
  for (const auto& u : corpus.utterances) {
    EXPECT_GE(u.features.frames(), FramesForSeconds(2.0));
    EXPECT_LE(u.features.frames(), FramesForSeconds(8.0));
    EXPECT_EQ(u.features.bins(), 64u);
  }
  EXPECT_EQ(FramesForSeconds(2.0), 198u);
  EXPECT_EQ(FramesForSeconds(8.0), 798u);
}

TEST(Corpus, FrameMeansConcentrateAroundTheTemplate) {
  CorpusConfig c;
  const Corpus corpus = GenerateSyntheticCorpus(c);
  std::size_t within = 0, total = 0;
  for (const auto& u : corpus.utterances) {
    const auto mean = u.features.MeanFrame();
    const auto& mu = corpus.templates[static_cast<std::size_t>(u.speaker)];
    const double bound = 3.0 * c.sigma / std::sqrt(static_cast<double>(u.features.frames()));
    for (std::size_t f = 0; f < mean.size(); ++f) {
      within += std::abs(mean[f] - mu[f]) <= bound;
      ++total;
    }
  }
  // Each bin's mean error is N(0, sigma^2 / T), so a 3-sigma bound holds for
  // 99.73% of bins; 7,680 bins leave room for the expected ~21 exceedances.
  EXPECT_GE(static_cast<double>(within) / total, 0.99);
}

TEST(Corpus, NoiseFreeSpeakersAreSeparable) {
  CorpusConfig c;
  c.num_speakers = 2;
  c.utts_per_speaker = 5;
  c.sigma = 0.0;
  const Corpus corpus = GenerateSyntheticCorpus(c);
  for (const auto& u : corpus.utterances) {
    const auto mean = u.features.MeanFrame();
    int best = -1;
    double best_dist = 1e300;
    for (std::size_t s = 0; s < 2; ++s) {
      double d = 0.0;
      for (std::size_t f = 0; f < mean.size(); ++f) {
        d += (mean[f] - corpus.templates[s][f]) * (mean[f] - corpus.templates[s][f]);
      }
      if (d < best_dist) best_dist = d, best = static_cast<int>(s);
    }
    EXPECT_EQ(best, u.speaker);
  }
  // Within-speaker cosine of mean frames.
  for (const auto& utts : corpus.by_speaker) {
    const auto a = corpus.utterances[utts[0]].features.MeanFrame();
    for (std::size_t i = 1; i < utts.size(); ++i) {
      const auto b = corpus.utterances[utts[i]].features.MeanFrame();
      double dot = 0, na = 0, nb = 0;
      for (std::size_t f = 0; f < a.size(); ++f) {
        dot += a[f] * b[f], na += a[f] * a[f], nb += b[f] * b[f];
      }
      EXPECT_NEAR(dot / std::sqrt(na * nb), 1.0, 1e-9);
    }
  }
}

TEST(Corpus, SaltKeepsTemplatesAndRedrawsUtterances) {
  CorpusConfig c;
  c.num_speakers = 2;
  c.utts_per_speaker = 2;
  const Corpus a = GenerateSyntheticCorpus(c);
  c.utterance_salt = 1;
  const Corpus b = GenerateSyntheticCorpus(c);
  EXPECT_EQ(a.templates, b.templates);
  EXPECT_NE(a.utterances[0].features, b.utterances[0].features);
}

TEST(Corpus, InvalidCountsAreConfigErrors) {
  CorpusConfig c;
  c.num_speakers = 1;
  EXPECT_THROW(GenerateSyntheticCorpus(c), ConfigError);
  c.num_speakers = 2;
  c.utts_per_speaker = 1;
  EXPECT_THROW(GenerateSyntheticCorpus(c), ConfigError);
}

TEST(Files, FbankRoundTripAndHeader) {
  const auto dir = TempDir("fbnk");
  const auto m = Ramp(7, 3);
  const std::string path = (dir / "x.fbnk").string();
  WriteFbank(path, m);
  EXPECT_EQ(ReadFbank(path), m);
  const std::string bytes = ReadFile(path);
  ASSERT_EQ(bytes.size(), 16u + 7 * 3 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "FBNK");
  EXPECT_EQ(LoadLe<std::uint32_t>(bytes.data() + 4), 7u);
  EXPECT_EQ(LoadLe<std::uint32_t>(bytes.data() + 8), 3u);
  EXPECT_EQ(LoadLe<float>(bytes.data() + 16 + 4 * 4), m.at(1, 1));

  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(DecodeFbank(bad, "bad"), FormatError);
  EXPECT_THROW(DecodeFbank(bytes.substr(0, bytes.size() - 1), "short"), FormatError);
}

TEST(Files, WavRoundTripFeedsTheFrontEnd) {
  const auto dir = TempDir("wav");
  const auto audio = Sine(1000, 8000);
  const std::string path = (dir / "a.wav").string();
  WriteWav(path, audio, 16000);
  const Wave w = ReadWav(path);
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.samples.size(), audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) EXPECT_NEAR(w.samples[i], audio[i], 1.0 / 32768);
  EXPECT_EQ(ComputeFbank(w.samples, w.sample_rate).frames(), 48u);

  std::string bytes = ReadFile(path);
  bytes[34] = 8;  // bits per sample
  WriteFileAtomic((dir / "b.wav").string(), bytes);
  EXPECT_THROW(ReadWav((dir / "b.wav").string()), FormatError);
  EXPECT_THROW(ReadWav((dir / "missing.wav").string()), InputError);
}

TEST(Files, CorpusDirectoryRoundTrip) {
  const auto dir = TempDir("corpus");
  CorpusConfig c;
  c.num_speakers = 2;
  c.utts_per_speaker = 2;
  c.mel_bins = 8;
  const Corpus a = GenerateSyntheticCorpus(c);
  SaveCorpus(a, dir.string());
  const Corpus b = LoadCorpus(dir.string());
  ASSERT_EQ(b.utterances.size(), 4u);
  EXPECT_EQ(b.by_speaker, a.by_speaker);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(b.utterances[i].id, a.utterances[i].id);
    EXPECT_EQ(b.utterances[i].features, a.utterances[i].features);
  }
}

}  // namespace
}  // namespace datt
