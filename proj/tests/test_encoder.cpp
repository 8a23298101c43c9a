#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "s2t/encoder/train.hpp"
#include "support.hpp"

using namespace s2t;
using namespace s2t::encoder;
using namespace s2t::test_support;
using ingest::Modality;

namespace {

EncoderConfig small_config(std::initializer_list<std::pair<Modality, std::size_t>> mods, double dropout = 0.0) {
  EncoderConfig c;
  for (auto [m, channels] : mods) {
    ModalityEncoderConfig mc;
    mc.window = 5;
    mc.stride = 5;
    mc.layers = 1;
    mc.d_encoder = 8;
    mc.heads = 2;
    mc.head_dim = 4;
    mc.ffn_hidden = 16;
    mc.dropout = dropout;
    mc.channels = channels;
    c.modalities[m] = mc;
  }
  c.d_output = 6;
  c.teacher_dim = 6;
  return c;
}

// Label k drives a sinusoid at frequency (k + 1) Hz on every channel with a
// per-sample phase jitter, so the encoder has a learnable signal per label.
std::vector<AlignmentSample> labelled_samples(std::size_t count, std::size_t labels, const TeacherProvider& teacher,
                                              std::uint64_t seed, std::size_t samples = 50) {
  Rng rng(seed);
  std::vector<AlignmentSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = i % labels;
    const double phase = 0.3 * rng.normal();
    EncoderInput in;
    for (auto [m, ch] : {std::pair{Modality::eye, 2u}, std::pair{Modality::emg, 3u}}) {
      Array a = Array::matrix(samples, ch);
      for (std::size_t r = 0; r < samples; ++r) {
        for (std::size_t c = 0; c < ch; ++c) {
          a.at(r, c) = std::sin(2.0 * std::numbers::pi * (k + 1.0) * r / 50.0 + phase + c) + 0.05 * rng.normal();
        }
      }
      in.emplace(m, a);
    }
    const std::string label = "label" + std::to_string(k);
    out.push_back({"clip" + std::to_string(i), in, teacher.require(label)});
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------------ tokenizer

TEST(Tokenizer, CountFollowsWindowFormula) {
  Rng rng(1);
  const Array values = random_matrix(rng, 100, 3);
  const Array w = random_matrix(rng, 30, 8);
  const Array b = Array::matrix(1, 8);
  EXPECT_EQ(tokenize_windows(values, 10, 10, w, b).rows(), 10u);
  EXPECT_EQ(tokenize_windows(random_matrix(rng, 100, 3), 10, 5, w, b).rows(), 19u);  // (100-10)/5+1
  EXPECT_EQ(tokenize_windows(random_matrix(rng, 27, 3), 10, 10, w, b).rows(), 2u);   // tail dropped
  EXPECT_THROW(tokenize_windows(random_matrix(rng, 9, 3), 10, 10, w, b), InputError);
}

TEST(Tokenizer, MatchesFlattenedWindowProduct) {
  Rng rng(2);
  const Array values = random_matrix(rng, 20, 2);
  const Array w = random_matrix(rng, 10, 4);
  const Array b = random_matrix(rng, 1, 4);
  const Array tokens = tokenize_windows(values, 5, 5, w, b);
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t o = 0; o < 4; ++o) {
      double expect = b.at(0, o);
      for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 2; ++c) expect += values.at(j * 5 + r, c) * w.at(r * 2 + c, o);
      EXPECT_NEAR(tokens.at(j, o), expect, 1e-12);
    }
  }
}

TEST(Tokenizer, ZeroWindowGivesZeroToken) {
  Rng rng(3);
  const Array tokens = tokenize_windows(Array::matrix(10, 2), 10, 10, random_matrix(rng, 20, 4), Array::matrix(1, 4));
  for (double v : tokens.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tokenizer, Gradients) {
  Rng rng(4);
  Parameter w("w", random_matrix(rng, 6, 4));
  Parameter b("b", random_matrix(rng, 1, 4));
  check_gradients({&w, &b}, [&](const ad::Var& x) { return tokenize_windows(x, 3, 2, ad::param(w), ad::param(b)); },
                  9, 2, 41);
}

// ------------------------------------------------------------------ positions

TEST(PositionalEncoding, Examples) {
  const auto zero = positional_encoding(0, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(zero[i], i % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(positional_encoding(1, 8)[0], 0.841471, 1e-6);
  // Independent evaluation of the second frequency pair.
  EXPECT_NEAR(positional_encoding(3, 8)[2], std::sin(3.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-15);
  EXPECT_NEAR(positional_encoding(3, 8)[3], std::cos(3.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-15);
  EXPECT_THROW(positional_encoding(1, 7), std::invalid_argument);
}

TEST(PositionalEncoding, EntriesBounded) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const std::size_t j = rng.below(10000);
    const std::size_t dim = 2 * (1 + rng.below(64));
    for (double v : positional_encoding(j, dim)) EXPECT_LE(std::abs(v), 1.0);
  }
}

// ------------------------------------------------------------------ encoder

TEST(Encoder, OutputWidthIndependentOfLength) {
  const auto cfg = small_config({{Modality::eye, 2}});
  Rng init(6);
  ModalityEncoder enc("m", cfg.modalities.at(Modality::eye), init);
  Rng rng(7);
  for (std::size_t t : {5u, 12u, 50u, 101u}) {
    const ad::Var y = enc(ad::constant(random_matrix(rng, t, 2)), nn::Pass{});
    EXPECT_EQ(y.rows(), 1u);
    EXPECT_EQ(y.cols(), 8u);
  }
  EXPECT_THROW(enc(ad::constant(random_matrix(rng, 4, 2)), nn::Pass{}), InputError);
}

TEST(Encoder, EvalModeIsPure) {
  SensorEncoder enc(small_config({{Modality::eye, 2}, {Modality::emg, 3}}, 0.1), 8);
  Rng rng(9);
  const EncoderInput in{{Modality::eye, random_matrix(rng, 50, 2)}, {Modality::emg, random_matrix(rng, 50, 3)}};
  const Array first = enc.embed("c", in).vector;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(enc.embed("c", in).vector, first);
}

TEST(Encoder, DropoutOnlyInTraining) {
  SensorEncoder enc(small_config({{Modality::eye, 2}}, 0.5), 8);
  Rng rng(10);
  const EncoderInput in{{Modality::eye, random_matrix(rng, 50, 2)}};
  Rng drop(11);
  const Array train = enc.forward(in, nn::Pass{true, &drop}).value();
  const Array eval = enc.forward(in, nn::Pass{}).value();
  EXPECT_GT(max_abs_diff(train, eval), 0.0);
}

TEST(Encoder, SwappingTokensChangesOutput) {
  SensorEncoder enc(small_config({{Modality::eye, 2}}), 12);
  Rng rng(13);
  Array a = random_matrix(rng, 20, 2);
  Array b = a;
  // Swap windows 0 and 2 (rows 0..4 and 10..14).
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 2; ++c) std::swap(b.at(r, c), b.at(10 + r, c));
  const Array ya = enc.embed("a", {{Modality::eye, a}}).vector;
  const Array yb = enc.embed("b", {{Modality::eye, b}}).vector;
  EXPECT_GT(max_abs_diff(ya, yb), 1e-9);
}

TEST(Encoder, RejectsWrongChannelsAndMissingModality) {
  SensorEncoder enc(small_config({{Modality::eye, 2}, {Modality::emg, 3}}), 14);
  Rng rng(15);
  EXPECT_THROW(enc.embed("c", {{Modality::eye, random_matrix(rng, 20, 2)}}), InputError);
  EXPECT_THROW(enc.embed("c", {{Modality::eye, random_matrix(rng, 20, 3)}, {Modality::emg, random_matrix(rng, 20, 3)}}),
               InputError);
}

TEST(Encoder, ModalityEncoderGradients) {
  auto cfg = small_config({{Modality::eye, 2}}).modalities.at(Modality::eye);
  cfg.layers = 2;
  Rng init(16);
  ModalityEncoder enc("m", cfg, init);
  std::vector<Parameter*> params;
  enc.parameters(params);
  check_gradients(params, [&](const ad::Var& x) { return enc(x, nn::Pass{}); }, 15, 2, 42, 3);
}

TEST(Encoder, FusionGradients) {
  Rng init(17);
  nn::Linear fusion("fusion", 3 * 4, 5, init);
  std::vector<Parameter*> params;
  fusion.parameters(params);
  check_gradients(
      params,
      [&](const ad::Var& x) {
        return fuse_modalities({ad::slice_rows(x, 0, 1), ad::slice_rows(x, 1, 1), ad::slice_rows(x, 2, 1)}, fusion);
      },
      3, 4, 43);
}

TEST(Fusion, ShapeContract) {
  Rng init(18);
  nn::Linear paper_scale("fusion", 3 * 512, 64, init);
  std::vector<ad::Var> ys(3, ad::constant(Array::matrix(1, 512, 0.1)));
  EXPECT_EQ(paper_scale.in_dim(), 1536u);
  EXPECT_EQ(fuse_modalities(ys, paper_scale).cols(), 64u);

  nn::Linear single("fusion1", 8, 6, init);
  EXPECT_EQ(fuse_modalities({ad::constant(Array::matrix(1, 8, 1.0))}, single).cols(), 6u);

  std::vector<ad::Var> mixed{ad::constant(Array::matrix(1, 512)), ad::constant(Array::matrix(1, 256))};
  EXPECT_THROW(fuse_modalities(mixed, paper_scale), std::invalid_argument);
  EXPECT_THROW(fuse_modalities({}, single), std::invalid_argument);
}

TEST(EncoderConfig, Validation) {
  auto c = small_config({{Modality::eye, 2}});
  EXPECT_NO_THROW(c.validate());
  auto bad_heads = c;
  bad_heads.modalities[Modality::eye].heads = 3;
  EXPECT_THROW(bad_heads.validate(), ConfigError);
  auto bad_out = c;
  bad_out.d_output = 5;
  EXPECT_THROW(bad_out.validate(), ConfigError);
  auto no_channels = c;
  no_channels.modalities[Modality::eye].channels = 0;
  EXPECT_THROW(no_channels.validate(), ConfigError);
  auto mixed = small_config({{Modality::eye, 2}, {Modality::emg, 3}});
  mixed.modalities[Modality::emg].d_encoder = 16;
  mixed.modalities[Modality::emg].head_dim = 8;
  EXPECT_THROW(mixed.validate(), ConfigError);
  EXPECT_EQ(EncoderConfig::from_json(c.to_json()).to_json(), c.to_json());
}

// ------------------------------------------------------------------ alignment loss

TEST(AlignmentLoss, Examples) {
  const Array t = Array::row({0.5, -1.0, 2.0});
  EXPECT_EQ(alignment_loss({ad::constant(t)}, {t}).value()[0], 0.0);
  EXPECT_DOUBLE_EQ(alignment_loss({ad::constant(Array::row({1.5, -1.0, 2.0}))}, {t}).value()[0], 1.0);
  const ad::Var a = ad::constant(Array::row({1.0, 0.0}));
  const ad::Var b = ad::constant(Array::row({0.0, 2.0}));
  EXPECT_DOUBLE_EQ(alignment_loss({a, b}, {Array::row({0.0, 0.0}), Array::row({0.0, 0.0})}).value()[0], 5.0);
  EXPECT_THROW(alignment_loss({a}, {Array::row({1.0, 2.0, 3.0})}), std::invalid_argument);
}

TEST(AlignmentLoss, RegularizerAddsWeightNorm) {
  Parameter w("w", Array::row({1.0, 2.0}));
  const Array t = Array::row({0.0});
  const double loss = alignment_loss({ad::constant(Array::row({0.0}))}, {t}, 0.5, {&w}).value()[0];
  EXPECT_DOUBLE_EQ(loss, 0.5 * 5.0);
}

// ------------------------------------------------------------------ teacher

TEST(SynthTeacher, PureUnitNorm) {
  const Array a = synth_teacher("slicing bread", 7, 64);
  EXPECT_EQ(a, synth_teacher("slicing bread", 7, 64));
  EXPECT_NE(a, synth_teacher("slicing bread", 8, 64));
  double n2 = 0.0;
  for (double v : a.data()) n2 += v * v;
  EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-12);
  EXPECT_THROW(synth_teacher("x", 1, 1), std::invalid_argument);
  EXPECT_THROW(synth_teacher("", 1, 64), std::invalid_argument);
}

TEST(SynthTeacher, DistinctLabelsWellSeparated) {
  std::vector<Array> vs;
  for (int i = 0; i < 20; ++i) vs.push_back(synth_teacher("activity " + std::to_string(i), 42, 64));
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 64; ++k) dot += vs[i][k] * vs[j][k];
      EXPECT_LT(dot, 0.5) << i << "," << j;
    }
  }
}

TEST(TeacherProvider, BinaryRoundTrip) {
  std::map<std::string, Array> m{{"a", Array::row({0.5, -0.25, 1.0})}, {"clip#2", Array::row({1.0, 2.0, 3.0})}};
  const auto t = TeacherProvider::from_map(3, m);
  const std::string bytes = t.to_binary();
  EXPECT_EQ(bytes.substr(0, 4), "S2TE");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + (2 + 1 + 12) + (2 + 6 + 12));
  const auto back = TeacherProvider::parse_binary(bytes, "mem");
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(*back.lookup("clip#2"), m.at("clip#2"));
  EXPECT_FALSE(back.lookup("missing"));
  EXPECT_THROW(back.require("missing"), InputError);
  EXPECT_THROW(TeacherProvider::parse_binary(bytes.substr(0, bytes.size() - 1), "mem"), CorruptionError);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(TeacherProvider::parse_binary(bad_version, "mem"), CorruptionError);
}

TEST(TeacherProvider, JsonAndFiles) {
  TempDir dir("teacher");
  const auto json_path = dir / "t.json";
  io::atomic_write(json_path, R"({"dim": 2, "embeddings": {"k1": [1, 0], "k2": [0, 1]}})");
  const auto t = TeacherProvider::load(json_path);
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(*t.lookup("k2"), Array::row({0.0, 1.0}));
  io::atomic_write(dir / "t.bin", t.to_binary());
  EXPECT_EQ(TeacherProvider::load(dir / "t.bin").embeddings(), t.embeddings());
  io::atomic_write(dir / "bad.json", R"({"dim": 3, "embeddings": {"k1": [1, 0]}})");
  EXPECT_THROW(TeacherProvider::load(dir / "bad.json"), ConfigError);
  EXPECT_THROW(TeacherProvider::load(dir / "absent.bin"), InputError);
}

TEST(TeacherProvider, SyntheticIsPureFunctionOfKey) {
  const auto t = TeacherProvider::synthetic(3, 16);
  EXPECT_EQ(*t.lookup("walking"), synth_teacher("walking", 3, 16));
  EXPECT_EQ(t.lookup("walking")->size(), 16u);
}

// ------------------------------------------------------------------ training

TEST(TrainEncoder, ZeroEpochsKeepsInitialization) {
  const auto cfg = small_config({{Modality::eye, 2}, {Modality::emg, 3}});
  const auto teacher = TeacherProvider::synthetic(1, 6);
  const auto samples = labelled_samples(8, 2, teacher, 20);
  TrainSettings s;
  s.epochs = 0;
  auto result = train_encoder(samples, {}, cfg, s, 99);
  const SensorEncoder fresh(cfg, 99);
  EXPECT_EQ(hash_parameters(result.encoder.parameters()), hash_parameters(fresh.parameters()));
  EXPECT_TRUE(result.log.epochs.empty());
}

TEST(TrainEncoder, DeterministicAndConverging) {
  const auto cfg = small_config({{Modality::eye, 2}, {Modality::emg, 3}}, 0.1);
  const auto teacher = TeacherProvider::synthetic(1, 6);
  const auto train = labelled_samples(32, 4, teacher, 21);
  const auto val = labelled_samples(8, 4, teacher, 22);
  TrainSettings s;
  s.lr = 3e-3;
  s.batch_size = 8;
  s.epochs = 60;
  s.patience = 0;
  auto a = train_encoder(train, val, cfg, s, 5);
  auto b = train_encoder(train, val, cfg, s, 5);
  EXPECT_EQ(hash_parameters(a.encoder.parameters()), hash_parameters(b.encoder.parameters()));
  const double final_loss = mean_alignment_loss(a.encoder, train);
  EXPECT_LT(final_loss, 0.2 * a.log.initial_train_loss);
  EXPECT_EQ(a.log.epochs.size(), 60u);
  EXPECT_TRUE(a.log.epochs.back().val_loss.has_value());
}

TEST(TrainEncoder, EarlyStoppingKeepsBestValidation) {
  const auto cfg = small_config({{Modality::eye, 2}, {Modality::emg, 3}});
  const auto teacher = TeacherProvider::synthetic(1, 6);
  const auto train = labelled_samples(8, 2, teacher, 23);
  const auto val = labelled_samples(4, 2, teacher, 24);
  TrainSettings s;
  s.lr = 1e-6;  // too small to improve by min_delta
  s.epochs = 50;
  s.patience = 3;
  s.min_delta = 1.0;
  auto r = train_encoder(train, val, cfg, s, 6);
  EXPECT_TRUE(r.log.stopped_early);
  EXPECT_EQ(r.log.epochs.size(), 3u);
  // No epoch beat the initial loss, so the initial weights are restored.
  const SensorEncoder fresh(cfg, 6);
  EXPECT_EQ(hash_parameters(r.encoder.parameters()), hash_parameters(fresh.parameters()));
}

TEST(TrainEncoder, MissingTeacherEmbeddingFails) {
  ingest::ClipRecord clip;
  clip.clip_id = "c0";
  clip.teacher_key = "unknown";
  const auto teacher = TeacherProvider::from_map(2, {{"known", Array::row({1.0, 0.0})}});
  EXPECT_THROW(alignment_samples({clip}, teacher), InputError);
  clip.teacher_key.reset();
  EXPECT_THROW(alignment_samples({clip}, teacher), InputError);
}

TEST(EncoderCheckpoint, RoundTripIsBitExact) {
  const auto cfg = small_config({{Modality::eye, 2}, {Modality::emg, 3}});
  SensorEncoder enc(cfg, 30);
  const ModelCheckpoint ckpt = enc.to_checkpoint(30);
  TempDir dir("enc_ckpt");
  save_checkpoint(ckpt, dir.path());
  const ModelCheckpoint loaded = load_checkpoint(dir.path());
  EXPECT_EQ(checkpoint_id(loaded), checkpoint_id(ckpt));
  const SensorEncoder back = SensorEncoder::from_checkpoint(loaded);
  EXPECT_EQ(hash_parameters(back.parameters()), hash_parameters(enc.parameters()));
  Rng rng(31);
  const EncoderInput in{{Modality::eye, random_matrix(rng, 20, 2)}, {Modality::emg, random_matrix(rng, 20, 3)}};
  EXPECT_EQ(back.embed("x", in).vector, enc.embed("x", in).vector);
}

TEST(EncoderCheckpoint, CorruptionDetected) {
  SensorEncoder enc(small_config({{Modality::eye, 2}}), 32);
  TempDir dir("enc_corrupt");
  save_checkpoint(enc.to_checkpoint(32), dir.path());
  std::string bytes = io::read_file(dir / "tensors.bin");
  io::atomic_write(dir / "tensors.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(dir.path()), CorruptionError);
}
