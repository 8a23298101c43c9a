// s2t: command-line front end for the sensor-to-text pipeline.
//
// Every command takes --config, --seed, --out, --force and repeatable
// --set key.path=value overrides, and echoes the resolved configuration to
// <out>/config.resolved.json. Exit codes: 0 success, 1 internal error,
// 2 configuration or schema error, 3 missing or corrupt input, 4 numeric
// divergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "s2t/pipeline/experiments.hpp"

namespace fs = std::filesystem;
using namespace s2t;
using namespace s2t::pipeline;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kInput = 3, kDivergence = 4 };

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  bool quiet = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run configuration (defaults apply to omitted keys)");
  cmd->add_option("--seed", o.seed, "Override the configured seed");
  cmd->add_option("--out", o.out, "Output directory (overrides the configured 'out')");
  cmd->add_flag("--force", o.force, "Recompute this command's stage and everything after it");
  cmd->add_option("--set", o.overrides, "Override a config field, e.g. --set bridge.stage1.lr=1e-3");
  cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress messages");
}

struct Context {
  RunConfig config;
  fs::path out;
  Pipeline::Logger log;
};

/// Config file + overrides + flags, validated. `check` runs before the
/// resolved config is claimed in the output directory.
Context resolve(const CommonOptions& o, const std::function<void(const RunConfig&)>& check = {}) {
  ojson j = ojson::object();
  fs::path base_dir;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw InputError("config file not found: " + o.config);
    j = json_io::parse(io::read_file(o.config), o.config);
    if (!j.is_object()) throw ConfigError(o.config + ": the configuration must be a JSON object");
    base_dir = fs::path(o.config).parent_path();
  }
  for (const auto& a : o.overrides) apply_override(j, a);
  if (o.seed) j["seed"] = *o.seed;
  Context ctx{RunConfig::from_json(j, base_dir), {}, {}};
  if (!o.out.empty()) ctx.config.out = o.out;
  ctx.config.validate();
  ctx.out = ctx.config.out;
  if (check) check(ctx.config);
  claim_output_dir(ctx.config, ctx.out, o.force);
  if (!o.quiet) {
    const auto t0 = std::chrono::steady_clock::now();
    ctx.log = [t0](const std::string& m) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "[%7.1fs] %s\n", s, m.c_str());
    };
  }
  return ctx;
}

Pipeline make_pipeline(const Context& ctx, bool force, std::initializer_list<Stage> stages) {
  return Pipeline(ctx.config, StagePaths::under(ctx.out), force ? std::set<Stage>(stages) : std::set<Stage>{},
                  ctx.log);
}

void print_scores(const metrics::EvalReport& r) {
  const auto& s = r.scores;
  std::printf("items %zu  BLEU-1 %.2f  BLEU-4 %.2f  ROUGE-L %.2f  METEOR %.2f  CIDEr %.2f  exact %.2f\n",
              r.items.size(), s.bleu1, s.bleu4, s.rouge_l, s.meteor, s.cider, s.exact_match);
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const CorruptionError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kInput;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor-to-text pipeline: preprocessing, alignment, bridging, evaluation and experiments"};
  app.require_subcommand(1);
  CommonOptions o;
  std::function<void()> action;

  auto* preprocess = app.add_subcommand("preprocess", "Split the dataset, fit normalization stats and cut clips");
  add_common(preprocess, o);
  preprocess->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      auto p = make_pipeline(ctx, o.force, {Stage::preprocess});
      const auto& d = p.prepared();
      std::printf("encoder clips %zu/%zu/%zu, decoder clips %zu/%zu/%zu (train/validation/test)\n",
                  d.encoder_clips.train.size(), d.encoder_clips.validation.size(), d.encoder_clips.test.size(),
                  d.decoder_clips.train.size(), d.decoder_clips.validation.size(), d.decoder_clips.test.size());
    };
  });

  auto* teacher = app.add_subcommand("teacher", "Create the teacher embedding file");
  teacher->require_subcommand(1);
  std::string teacher_file;
  auto* teacher_import = teacher->add_subcommand("import", "Convert a JSON or binary teacher file to <out>/teacher.s2te");
  add_common(teacher_import, o);
  teacher_import->add_option("file", teacher_file, "Teacher embeddings (JSON or S2TE binary)")->required();
  teacher_import->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      const auto t = encoder::TeacherProvider::load(teacher_file);
      io::atomic_write(ctx.out / "teacher.s2te", t.to_binary());
      std::printf("wrote %s (dim %zu)\n", (ctx.out / "teacher.s2te").c_str(), t.dim());
    };
  });
  auto* teacher_synth =
      teacher->add_subcommand("synth", "Write synthetic teacher vectors for the configured activity labels");
  add_common(teacher_synth, o);
  teacher_synth->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      std::map<std::string, Array> vectors;
      for (const auto& act : synthetic_activities(ctx.config.data.synthetic)) {
        vectors.emplace(act.label, encoder::synth_teacher(act.label, ctx.config.seed, ctx.config.encoder.d_output));
      }
      const auto t = encoder::TeacherProvider::from_map(ctx.config.encoder.d_output, std::move(vectors));
      io::atomic_write(ctx.out / "teacher.s2te", t.to_binary());
      std::printf("wrote %s (dim %zu)\n", (ctx.out / "teacher.s2te").c_str(), t.dim());
    };
  });

  auto* split = app.add_subcommand("split", "Write the train/validation/test split to <out>/split.json");
  add_common(split, o);
  split->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      auto p = make_pipeline(ctx, o.force, {Stage::data});
      const auto manifest = ingest::load_manifest(p.data().manifest);
      const auto s = ingest::split_manifest(manifest, ctx.config.split.mode, ctx.config.split.fractions, ctx.config.seed);
      io::atomic_write(ctx.out / "split.json", s.to_json().dump(2) + "\n");
      std::printf("train %zu, validation %zu, test %zu\n", s.train.size(), s.validation.size(), s.test.size());
    };
  });

  auto* train_encoder = app.add_subcommand("train-encoder", "Align the sensor encoder to the teacher space");
  add_common(train_encoder, o);
  train_encoder->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      make_pipeline(ctx, o.force, {Stage::encoder}).encoder();
    };
  });

  auto* pretrain = app.add_subcommand("pretrain-lm", "Pretrain the toy language decoder on caption text");
  add_common(pretrain, o);
  pretrain->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      make_pipeline(ctx, o.force, {Stage::decoder}).decoder();
    };
  });

  auto* train_bridge = app.add_subcommand("train-bridge", "Stage 1: train the Q-former on captioned sensor clips");
  add_common(train_bridge, o);
  train_bridge->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      make_pipeline(ctx, o.force, {Stage::stage1}).stage1();
    };
  });

  auto* instruct = app.add_subcommand("instruct-tune", "Stage 2: instruction-tune the Q-former on teacher vectors");
  add_common(instruct, o);
  instruct->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      make_pipeline(ctx, o.force, {Stage::stage2}).stage2();
    };
  });

  auto* generate = app.add_subcommand("generate", "Caption the clips of one split part into <out>/generate/<part>.jsonl");
  add_common(generate, o);
  std::string part = "test";
  generate->add_option("--part", part, "train, validation or test")->check(CLI::IsMember({"train", "validation", "test"}));
  generate->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      auto p = make_pipeline(ctx, false, {});
      const auto candidates = p.generate(part);
      const fs::path file = ctx.out / "generate" / (part + ".jsonl");
      io::atomic_write(file, metrics::candidates_jsonl(candidates));
      std::printf("wrote %zu captions to %s\n", candidates.size(), file.c_str());
    };
  });

  auto* evaluate = app.add_subcommand("evaluate", "Score test-set captions (or external candidate/reference files)");
  add_common(evaluate, o);
  std::string candidates_file, references_file;
  evaluate->add_option("--candidates", candidates_file, "JSONL of {item_id, candidate}");
  evaluate->add_option("--references", references_file, "JSONL of {item_id, references}");
  evaluate->callback([&] {
    action = [&] {
      auto ctx = resolve(o, [&](const RunConfig&) {
        if (candidates_file.empty() != references_file.empty()) {
          throw ConfigError("--candidates and --references must be given together");
        }
      });
      if (!candidates_file.empty()) {
        const auto report = metrics::evaluate_corpus(metrics::read_candidates(candidates_file),
                                                     metrics::read_references(references_file),
                                                     {ctx.config.data.name, "external", "external"}, ctx.config.metrics);
        io::atomic_write(ctx.out / "report.json", report.dump());
        print_scores(report);
        return;
      }
      print_scores(make_pipeline(ctx, o.force, {Stage::evaluate}).evaluate());
    };
  });

  auto* run = app.add_subcommand("run", "All stages: preprocess, encoder, decoder, stage 1, stage 2, evaluate");
  add_common(run, o);
  run->callback([&] {
    action = [&] {
      auto ctx = resolve(o);
      print_scores(make_pipeline(ctx, o.force, {Stage::data}).run());
    };
  });

  auto* ablate_cmd = app.add_subcommand("ablate", "Full model vs. ablated variants; writes ablation.{txt,json}");
  add_common(ablate_cmd, o);
  std::vector<std::string> variants;
  ablate_cmd->add_option("--variants", variants, "Variants besides the full model: no_temporal, no_noise, no_stage1")
      ->delimiter(',');
  ablate_cmd->callback([&] {
    action = [&] {
      auto ctx = resolve(o, [&](const RunConfig&) {
        for (const auto& v : variants) describe_variant(v);
      });
      std::cout << ablate(ctx.config, variants, ctx.out, {o.force, ctx.log}).to_text();
    };
  });

  auto* holdout_cmd = app.add_subcommand("holdout", "Modality or subject holdout comparison table");
  add_common(holdout_cmd, o);
  std::string dimension = "modality";
  holdout_cmd->add_option("--dimension", dimension, "modality or subject");
  holdout_cmd->callback([&] {
    action = [&] {
      const auto dim = parse_holdout_dimension(dimension);
      auto ctx = resolve(o, [&](const RunConfig& c) { check_holdout(c, dim); });
      std::cout << holdout(ctx.config, dim, ctx.out, {o.force, ctx.log}).to_text();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  return run_guarded(action);
}
