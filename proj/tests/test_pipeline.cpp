#include <gtest/gtest.h>

#include <map>
#include <set>

#include "s2t/pipeline/experiments.hpp"
#include "support.hpp"

using namespace s2t;
using namespace s2t::pipeline;
using s2t::test_support::TempDir;
namespace fs = std::filesystem;

namespace {

RunConfig smoke_config() { return RunConfig::load(fs::path(S2T_SOURCE_DIR) / "configs" / "smoke.json"); }

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(RunConfig, DefaultsValidateAndRoundTrip) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(RunConfig, ShippedConfigsLoad) {
  for (const char* name : {"default.json", "smoke.json"}) {
    const RunConfig c = RunConfig::load(fs::path(S2T_SOURCE_DIR) / "configs" / name);
    EXPECT_NO_THROW(c.validate()) << name;
  }
  // The shipped default file spells out the built-in defaults.
  EXPECT_EQ(RunConfig::load(fs::path(S2T_SOURCE_DIR) / "configs" / "default.json").to_json(), RunConfig{}.to_json());
}

TEST(RunConfig, UnknownKeysAreRejectedAtEveryLevel) {
  EXPECT_THROW(RunConfig::from_json(ojson{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json(ojson{{"bridge", {{"stage1", {{"lrr", 1e-3}}}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json(ojson{{"encoder", {{"modality", {{"channels", 3}}}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json(ojson{{"bridge", {{"qformer", {{"d_model", 3}}}}}}), ConfigError);
}

TEST(RunConfig, WrongTypesAreConfigErrors) {
  EXPECT_THROW(RunConfig::from_json(ojson{{"seed", "seven"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json(ojson{{"modalities", {"eye", "smell"}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json(ojson{{"split", {{"mode", "random"}}}}), ConfigError);
}

TEST(RunConfig, FractionsMustSumToOne) {
  RunConfig c = RunConfig::from_json(ojson{{"split", {{"fractions", {0.6, 0.3, 0.3}}}}});
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, SegmentsMustHoldAnEncoderWindow) {
  // 16 s decoder window / 16 segments = 1 s per segment < 2 s encoder window.
  RunConfig c;
  c.bridge.temporal_segments = 16;
  EXPECT_THROW(c.validate(), ConfigError);
  c.ablation.no_temporal = true;  // one segment: fine
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.effective_segments(), 1u);
}

TEST(RunConfig, AblationFlagsDriveNoiseAndSegments) {
  RunConfig c;
  EXPECT_EQ(c.effective_segments(), 8u);
  EXPECT_EQ(c.stage1_noise(), 1e-4);
  c.ablation.no_noise = true;
  EXPECT_EQ(c.stage1_noise(), 0.0);
  EXPECT_EQ(c.stage2_noise(), 0.0);
}

TEST(RunConfig, QFormerWidthsFollowEncoderAndDecoder) {
  RunConfig c;
  c.encoder.d_output = 24;
  const auto q = c.qformer_config();
  EXPECT_EQ(q.d_input, 24u);
  EXPECT_EQ(q.d_model, c.decoder.arch.d_model);
}

TEST(RunConfig, RelativeDataPathsResolveAgainstConfigDir) {
  TempDir dir("cfgpaths");
  io::atomic_write(dir / "sub/run.json", R"({"data": {"manifest": "data/manifest.json", "teacher": "/abs/t.s2te"}})");
  const RunConfig c = RunConfig::load(dir / "sub/run.json");
  EXPECT_EQ(fs::path(*c.data.manifest), (dir / "sub/data/manifest.json").lexically_normal());
  EXPECT_EQ(*c.data.teacher, "/abs/t.s2te");
}

TEST(ApplyOverride, ParsesJsonValuesAndFallsBackToStrings) {
  ojson j = ojson::object();
  apply_override(j, "bridge.stage1.lr=0.01");
  apply_override(j, "modalities=[\"eye\",\"emg\"]");
  apply_override(j, "data.name=my data");
  apply_override(j, "ablation.no_noise=true");
  EXPECT_DOUBLE_EQ(j["bridge"]["stage1"]["lr"].get<double>(), 0.01);
  EXPECT_EQ(j["modalities"].size(), 2u);
  EXPECT_EQ(j["data"]["name"], "my data");
  EXPECT_EQ(j["ablation"]["no_noise"], true);
  const RunConfig c = RunConfig::from_json(j);
  EXPECT_DOUBLE_EQ(c.bridge.stage1.lr, 0.01);
  EXPECT_TRUE(c.ablation.no_noise);
}

TEST(ApplyOverride, RejectsMalformedAssignments) {
  ojson j = ojson::object();
  EXPECT_THROW(apply_override(j, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(j, "=3"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b=3"), ConfigError);
  apply_override(j, "seed=3");
  EXPECT_THROW(apply_override(j, "seed.x=3"), ConfigError);
}

// ---------------------------------------------------------------- synthetic data

TEST(Synthetic, SequenceCaptionNamesBothActivitiesInOrder) {
  EXPECT_EQ(sequence_caption("peel_cucumber", "slice_potato"), "A person is peeling a cucumber, then slicing a potato.");
}

TEST(Synthetic, DatasetLayoutAndCounts) {
  TempDir dir("synth");
  SyntheticSpec spec;
  spec.subjects = 2;
  spec.encoder_recording_s = 2;
  spec.caption_recording_s = 4;
  const auto ds = write_synthetic_dataset(spec, 3, 16, dir.path());
  const auto m = ingest::load_manifest(ds.manifest);
  const std::size_t acts = spec.actions.size() * spec.objects.size();
  const std::size_t per_subject = acts * spec.encoder_repeats + acts * (acts - 1) * spec.caption_repeats;
  ASSERT_EQ(m.entries.size(), spec.subjects * per_subject);
  std::size_t keyed = 0;
  std::set<std::string> subjects;
  for (const auto& e : m.entries) {
    subjects.insert(e.subject_id);
    EXPECT_EQ(e.modality_files.size(), spec.modalities.size());
    EXPECT_FALSE(e.caption.empty());
    if (e.teacher_key) {
      ++keyed;
      EXPECT_EQ(*e.teacher_key, e.label);
    } else {
      EXPECT_NE(e.caption.find(", then "), std::string::npos);
    }
  }
  EXPECT_EQ(keyed, spec.subjects * acts * spec.encoder_repeats);
  EXPECT_EQ(subjects.size(), spec.subjects);
  const auto teacher = encoder::TeacherProvider::load(ds.teacher);
  EXPECT_EQ(teacher.dim(), 16u);
  EXPECT_EQ(json_io::read_jsonl(ds.instruct).size(), acts * spec.questions.size());
  EXPECT_EQ(json_io::read_jsonl(ds.captions).size(), m.entries.size());
}

TEST(Synthetic, GenerationIsDeterministicPerSeed) {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  SyntheticSpec spec;
  spec.subjects = 1;
  spec.encoder_recording_s = 2;
  spec.caption_recording_s = 4;
  write_synthetic_dataset(spec, 5, 8, a.path());
  write_synthetic_dataset(spec, 5, 8, b.path());
  write_synthetic_dataset(spec, 6, 8, c.path());
  EXPECT_EQ(tree(a.path()), tree(b.path()));
  EXPECT_NE(tree(a.path()), tree(c.path()));
}

TEST(Synthetic, StreamsHaveJitteredTimestampsAndMissingValues) {
  TempDir dir("synth_streams");
  SyntheticSpec spec;
  spec.subjects = 1;
  spec.missing_rate = 0.05;
  const auto ds = write_synthetic_dataset(spec, 1, 8, dir.path());
  const auto m = ingest::load_manifest(ds.manifest);
  const auto& e = m.entries.front();
  const auto s = ingest::parse_stream(m.resolve(e.modality_files.at(ingest::Modality::emg)).string(),
                                      ingest::Modality::emg, e.clip_id);
  ASSERT_GT(s.timestamps.size(), 10u);
  EXPECT_DOUBLE_EQ(s.timestamps.front(), 0.0);
  EXPECT_DOUBLE_EQ(s.timestamps.back(), spec.encoder_recording_s);
  bool irregular = false;
  for (std::size_t i = 2; i < s.timestamps.size(); ++i) {
    EXPECT_GT(s.timestamps[i], s.timestamps[i - 1]);
    irregular |= std::abs((s.timestamps[i] - s.timestamps[i - 1]) - 1.0 / spec.source_hz) > 1e-9;
  }
  EXPECT_TRUE(irregular);
  std::size_t missing = 0;
  for (double v : s.values) missing += std::isnan(v) ? 1 : 0;
  EXPECT_GT(missing, 0u);
}

// ---------------------------------------------------------------- output directories

TEST(ClaimOutputDir, WritesResolvedConfigAndGuardsReuse) {
  TempDir dir("claim");
  RunConfig c;
  claim_output_dir(c, dir / "run", false);
  const auto written = json_io::load(dir / "run/config.resolved.json");
  EXPECT_FALSE(written.contains("out"));
  EXPECT_EQ(RunConfig::from_json(written).to_json().dump(), [&] {
    auto j = c.to_json();
    j["out"] = RunConfig{}.out;
    return j.dump();
  }());
  // Same config (even under another out) is fine; a different one needs overwrite.
  c.out = "elsewhere";
  EXPECT_NO_THROW(claim_output_dir(c, dir / "run", false));
  c.seed = 99;
  EXPECT_THROW(claim_output_dir(c, dir / "run", false), ConfigError);
  EXPECT_NO_THROW(claim_output_dir(c, dir / "run", true));
  EXPECT_EQ(json_io::load(dir / "run/config.resolved.json")["seed"], 99);
}

// ---------------------------------------------------------------- pipeline

TEST(Pipeline, InvalidConfigFailsBeforeAnyWork) {
  TempDir dir("invalid");
  RunConfig c = smoke_config();
  c.split.fractions = {0.6, 0.3, 0.3};
  EXPECT_THROW(Pipeline(c, StagePaths::under(dir / "run")), ConfigError);
  EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(Pipeline, MissingManifestIsAnInputError) {
  TempDir dir("missing");
  RunConfig c = smoke_config();
  c.data.manifest = (dir / "nope.json").string();
  Pipeline p(c, StagePaths::under(dir / "run"));
  EXPECT_THROW(p.run(), InputError);
}

TEST(Pipeline, RunProducesEveryArtifactAndAFullReport) {
  TempDir dir("run");
  Pipeline p(smoke_config(), StagePaths::under(dir.path()));
  const auto report = p.run();
  for (const char* f : {"data/manifest.json", "preprocess/split.json", "preprocess/stats.json", "preprocess/clips.json",
                        "encoder/checkpoint/manifest.json", "encoder/checkpoint/tensors.bin", "encoder/log.json",
                        "decoder/checkpoint/tensors.bin", "stage1/checkpoint/tensors.bin", "stage2/checkpoint/tensors.bin",
                        "eval/report.json", "eval/candidates.jsonl", "eval/references.jsonl", "eval/instruct.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto j = json_io::load(dir / "eval/report.json");
  const auto& scores = j["scores"];
  for (const char* k : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor", "cider", "cider_raw", "exact_match"}) {
    EXPECT_TRUE(scores.contains(k)) << k;
  }
  EXPECT_TRUE(scores["spice"].is_null());
  EXPECT_EQ(report.items.size(), p.references("test").size());
}

TEST(Pipeline, RerunSkipsStagesAndReturnsTheSameReport) {
  TempDir dir("rerun");
  const RunConfig c = smoke_config();
  const auto first = Pipeline(c, StagePaths::under(dir.path())).run();
  const auto before = tree(dir.path());
  std::vector<std::string> log;
  Pipeline again(c, StagePaths::under(dir.path()), {}, [&](const std::string& m) { log.push_back(m); });
  EXPECT_EQ(again.run(), first);
  EXPECT_EQ(tree(dir.path()), before);
  for (const char* stage : {"encoder", "decoder", "stage1", "stage2", "evaluate"}) {
    EXPECT_NE(std::find(log.begin(), log.end(), std::string(stage) + ": up to date, skipped"), log.end()) << stage;
  }
}

TEST(Pipeline, TwoRunsAreByteIdentical) {
  TempDir a("twin_a"), b("twin_b");
  Pipeline(smoke_config(), StagePaths::under(a.path())).run();
  Pipeline(smoke_config(), StagePaths::under(b.path())).run();
  const auto ta = tree(a.path()), tb = tree(b.path());
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta) EXPECT_TRUE(tb.at(name) == bytes) << name;
}

TEST(Pipeline, ForcingAStageRecomputesItAndItsDependents) {
  TempDir dir("force");
  const RunConfig c = smoke_config();
  Pipeline(c, StagePaths::under(dir.path())).run();
  std::vector<std::string> log;
  Pipeline p(c, StagePaths::under(dir.path()), {Stage::stage1}, [&](const std::string& m) { log.push_back(m); });
  p.run();
  auto has = [&](const std::string& s) { return std::find(log.begin(), log.end(), s) != log.end(); };
  EXPECT_TRUE(has("encoder: up to date, skipped"));
  EXPECT_TRUE(has("decoder: up to date, skipped"));
  EXPECT_FALSE(has("stage1: up to date, skipped"));
  EXPECT_FALSE(has("stage2: up to date, skipped"));
  EXPECT_FALSE(has("evaluate: up to date, skipped"));
}

TEST(Pipeline, StaleBridgeIsRetrainedWhenItsEncoderChanges) {
  TempDir dir("stale");
  const RunConfig c = smoke_config();
  Pipeline(c, StagePaths::under(dir.path())).run();
  // Replace the encoder with one trained under another seed.
  RunConfig other = c;
  other.seed = c.seed + 1;
  StagePaths elsewhere = StagePaths::under(dir / "other");
  elsewhere.data = dir / "data";
  elsewhere.preprocess = dir / "preprocess";
  Pipeline(other, elsewhere).encoder();
  fs::remove_all(dir / "encoder");
  fs::copy(dir / "other/encoder", dir / "encoder", fs::copy_options::recursive);

  std::vector<std::string> log;
  Pipeline p(c, StagePaths::under(dir.path()), {}, [&](const std::string& m) { log.push_back(m); });
  p.run();
  EXPECT_NE(std::find(log.begin(), log.end(), "stage1: encoder or decoder changed; retraining"), log.end());
  EXPECT_EQ(load_checkpoint(dir / "stage1/checkpoint").manifest["inputs"]["encoder"], p.encoder_id());
}

TEST(Pipeline, NoStage1KeepsAnUntrainedBridge) {
  TempDir dir("nostage1");
  RunConfig c = smoke_config();
  c.ablation.no_stage1 = true;
  Pipeline p(c, StagePaths::under(dir.path()));
  p.run();
  const auto ck = load_checkpoint(dir / "stage1/checkpoint");
  EXPECT_EQ(ck.manifest["stage"], "untrained");
  EXPECT_FALSE(fs::exists(dir / "stage1/log.json"));
  EXPECT_FALSE(fs::exists(dir / "stage2"));
}

TEST(Pipeline, BridgeTrainingLeavesEncoderAndDecoderUntouched) {
  TempDir dir("frozen");
  const RunConfig c = smoke_config();
  Pipeline p(c, StagePaths::under(dir.path()));
  const std::string enc = encode_tensors(p.encoder().to_checkpoint(c.seed).tensors);
  const std::string dec = encode_tensors(p.decoder().to_checkpoint(c.seed).tensors);
  p.stage1();
  p.stage2();
  EXPECT_TRUE(encode_tensors(p.encoder().to_checkpoint(c.seed).tensors) == enc);
  EXPECT_TRUE(encode_tensors(p.decoder().to_checkpoint(c.seed).tensors) == dec);
}

TEST(Pipeline, CaptionsFileOverridesManifestCaptions) {
  TempDir dir("captions");
  RunConfig c = smoke_config();
  Pipeline base(c, StagePaths::under(dir / "base"));
  const auto src = base.data();
  std::string rows;
  for (const auto& e : ingest::load_manifest(src.manifest).entries) {
    rows += ojson{{"clip_id", e.clip_id}, {"caption", "A person is cooking."}}.dump() + "\n";
  }
  io::atomic_write(dir / "captions.jsonl", rows);
  c.data.captions = (dir / "captions.jsonl").string();
  Pipeline p(c, StagePaths::under(dir / "base"));
  for (const auto& [id, refs] : p.references("train")) EXPECT_EQ(refs.front(), "A person is cooking.") << id;
}

TEST(Pipeline, TeacherDimensionMustMatchEncoderOutput) {
  TempDir dir("teacherdim");
  RunConfig c = smoke_config();
  std::map<std::string, Array> v{{"peel_cucumber", encoder::synth_teacher("peel_cucumber", 1, 8)}};
  io::atomic_write(dir / "t.s2te", encoder::TeacherProvider::from_map(8, v).to_binary());
  c.data.teacher = (dir / "t.s2te").string();
  Pipeline p(c, StagePaths::under(dir / "run"));
  EXPECT_THROW(p.prepared(), ConfigError);
}

// ---------------------------------------------------------------- experiments

TEST(ComparisonTable, TextIsAlignedAndJsonKeepsKeyOrder) {
  ComparisonTable t{"Demo", {}};
  metrics::CorpusScores s;
  s.bleu1 = 12.3456;
  s.cider = 345.6;
  t.rows.push_back({"a", "first condition", 3, s});
  s.bleu1 = 100.0;
  t.rows.push_back({"b", "b", 4, s});
  const std::string text = t.to_text();
  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 5u);  // title, header, rule, two rows
  EXPECT_EQ(lines[0], "Demo");
  EXPECT_EQ(lines[2].find_first_not_of('-'), std::string::npos);
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(lines[i].size(), lines[1].size()) << lines[i];
  EXPECT_NE(lines[3].find("12.35"), std::string::npos);
  EXPECT_NE(lines[4].find("100.00"), std::string::npos);

  const auto j = t.to_json();
  std::vector<std::string> keys;
  for (const auto& [k, v] : j["rows"][0].items()) keys.push_back(k);
  const std::vector<std::string> expected{"condition", "description", "item_count", "bleu1",   "bleu2",
                                          "bleu3",     "bleu4",       "rouge_l",    "meteor",  "cider",
                                          "cider_raw", "spice",       "exact_match"};
  EXPECT_EQ(keys, expected);
  EXPECT_TRUE(j["rows"][0]["spice"].is_null());
}

TEST(Ablate, UnknownVariantIsRejected) {
  TempDir dir("ablate_bad");
  EXPECT_THROW(ablate(smoke_config(), {"no_temporal", "no_brain"}, dir / "out"), ConfigError);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Ablate, EmptyVariantListGivesTheFullRowOnly) {
  TempDir dir("ablate_empty");
  const auto t = ablate(smoke_config(), {}, dir.path());
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].condition, "full");
  EXPECT_TRUE(fs::exists(dir / "ablation.json"));
  EXPECT_TRUE(fs::exists(dir / "ablation.txt"));
}

TEST(Ablate, FourVariantsShareUpstreamStages) {
  TempDir dir("ablate_all");
  const auto t = ablate(smoke_config(), {"no_temporal", "no_noise", "no_stage1"}, dir.path());
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0].condition, "full");
  EXPECT_EQ(t.rows[1].description, "w/o temporal tokens");
  // One encoder and decoder for all rows; a bridge per row.
  EXPECT_TRUE(fs::exists(dir / "shared/encoder/checkpoint"));
  EXPECT_FALSE(fs::exists(dir / "variants/full/encoder"));
  EXPECT_TRUE(fs::exists(dir / "variants/no_temporal/stage1/checkpoint"));
  EXPECT_EQ(load_checkpoint(dir / "variants/no_temporal/stage1/checkpoint").manifest["temporal_segments"], 1);
  EXPECT_EQ(load_checkpoint(dir / "variants/full/stage1/checkpoint").manifest["temporal_segments"], 4);
  // The same ablation run alone reproduces the row exactly.
  RunConfig solo = apply_variant(smoke_config(), "no_noise");
  TempDir single("ablate_solo");
  EXPECT_EQ(Pipeline(solo, StagePaths::under(single.path())).run().scores, t.row("no_noise").scores);
}

TEST(Holdout, RequiresEnoughModalitiesOrSubjects) {
  TempDir dir("holdout_bad");
  RunConfig c = smoke_config();
  c.modalities = {ingest::Modality::eye};
  EXPECT_THROW(holdout(c, HoldoutDimension::modality, dir / "m"), ConfigError);
  c = smoke_config();
  c.data.synthetic.subjects = 2;
  EXPECT_THROW(holdout(c, HoldoutDimension::subject, dir / "s"), ConfigError);
  EXPECT_THROW(parse_holdout_dimension("weather"), ConfigError);
}

TEST(Holdout, ModalityRowsAreEachOnlyPlusCombined) {
  TempDir dir("holdout_mod");
  const auto t = holdout(smoke_config(), HoldoutDimension::modality, dir.path());
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0].description, "eye only");
  EXPECT_EQ(t.rows[1].description, "emg only");
  EXPECT_EQ(t.rows[2].description, "body only");
  EXPECT_EQ(t.rows[3].description, "eye, emg, body");
  EXPECT_TRUE(fs::exists(dir / "holdout_modality.txt"));
  // Shared decoder, separate encoders.
  EXPECT_TRUE(fs::exists(dir / "shared/decoder/checkpoint"));
  EXPECT_TRUE(fs::exists(dir / "rows/eye/encoder/checkpoint"));
  EXPECT_FALSE(fs::exists(dir / "rows/eye/decoder"));
  const auto ck = load_checkpoint(dir / "rows/eye/encoder/checkpoint");
  EXPECT_EQ(ck.manifest["architecture"]["modalities"].size(), 1u);
}

TEST(Holdout, SubjectRowsCompareSeenAndUnseenUsers) {
  TempDir dir("holdout_subj");
  const auto t = holdout(smoke_config(), HoldoutDimension::subject, dir.path());
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].condition, "seen_users");
  EXPECT_EQ(t.rows[1].condition, "unseen_users");
  // Under the by-subject split no test subject appears in training.
  const auto split = ingest::DatasetSplit::from_json(json_io::load(dir / "rows/unseen_users/preprocess/split.json"));
  const auto m = ingest::load_manifest(dir / "shared/data/manifest.json");
  std::map<std::string, std::string> subject;
  for (const auto& e : m.entries) subject[e.clip_id] = e.subject_id;
  std::set<std::string> train_subjects;
  for (const auto& id : split.train) train_subjects.insert(subject[id]);
  for (const auto& id : split.test) EXPECT_FALSE(train_subjects.contains(subject[id])) << id;
}
