#include "unicorn/cli.hpp"

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "unicorn/byte_io.hpp"
#include "unicorn/checkpoint.hpp"
#include "unicorn/data_io.hpp"
#include "unicorn/explain.hpp"
#include "unicorn/harness.hpp"

namespace unicorn::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return kExitConfig;
    case ErrorCode::kNonFinite: return kExitNumeric;
    case ErrorCode::kUnsupportedVersion:
    case ErrorCode::kConfigMismatch: return kExitVersion;
    default: return kExitData;
  }
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> all = ModelConfig::keys();
    for (const auto& key : TrainConfig::keys()) all.push_back(key);
    return all;
  }();
  return k;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
  kv.reject_unknown(keys());
  return {ModelConfig::from_kv(kv), TrainConfig::from_kv(kv)};
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValues kv = path.empty() ? KeyValues{} : KeyValues::load(path);
  for (const auto& o : overrides) kv.apply_override(o);
  return from_kv(kv);
}

std::string RunConfig::metadata_text() const {
  KeyValues kv;
  model.to_kv(kv);
  train.to_kv(kv);
  kv.set("prng", std::string(Rng::kAlgorithmId));
  return kv.serialize();
}

namespace {

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::vector<SampleRecord> load_part(const std::string& manifest, const std::string& splits_path, std::size_t fold,
                                    const std::string& part) {
  auto records = load_dataset(manifest);
  if (splits_path.empty()) return records;
  const auto plans = parse_splits(read_file(splits_path), splits_path);
  for (const auto& p : plans) {
    if (p.fold != fold) continue;
    if (part == "train") return select_samples(records, p.train);
    if (part == "val") return select_samples(records, p.val);
    if (part == "test") return select_samples(records, p.test);
    if (part == "all") return records;
    fail(ErrorCode::kConfig, "unknown split part '" + part + "'");
  }
  fail(ErrorCode::kData, splits_path + ": no fold " + std::to_string(fold));
}

void check_widths(const Model& model, const std::vector<SampleRecord>& records) {
  for (const auto& r : records) {
    for (const auto& [m, bag] : r.bags) {
      if (bag.width() != model.config().feat_dim) {
        fail(ErrorCode::kConfigMismatch, "config mismatch: data feat_dim " + std::to_string(bag.width()) +
                                             " != checkpoint feat_dim " + std::to_string(model.config().feat_dim));
      }
      if (m >= model.config().n_modalities) {
        fail(ErrorCode::kConfigMismatch, "config mismatch: data has modality " + std::to_string(m) +
                                             " beyond checkpoint n_modalities");
      }
    }
  }
}

std::unique_ptr<Model> load_checked(const std::string& checkpoint, const std::string& config_path,
                                    const std::vector<std::string>& overrides) {
  auto model = load_checkpoint(checkpoint);
  if (!config_path.empty() || !overrides.empty()) {
    const RunConfig rc = RunConfig::load(config_path, overrides);
    if (!(rc.model == model->config())) {
      fail(ErrorCode::kConfigMismatch, "config mismatch: " + checkpoint + " was built with a different model config");
    }
  }
  return model;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::vector<std::string> copy = args;
  for (auto& a : copy) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-stain multiple-instance transformer: data, training, evaluation and explanation"};
  app.require_subcommand(1);

  std::string spec_path, out, manifest, splits, config, checkpoint, sample_id, bag_set, part = "test";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::size_t fold = 0, threads = 0;
  bool per_modality = false, expert_only = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-stain dataset (bags + manifest.tsv)");
  synth->add_option("--spec", spec_path, "Synthetic spec key=value file (defaults to the reference task)");
  synth->add_option("--set", overrides, "Override a spec key: key=value (repeatable)");
  synth->add_option("--out", out, "Output directory")->required();

  auto* split = app.add_subcommand("split", "Write grouped 5-fold 60/20/20 splits");
  split->add_option("--manifest", manifest, "Dataset manifest")->required();
  split->add_option("--seed", seed, "Shuffle seed")->required();
  split->add_option("--out", out, "Output splits file")->required();

  auto* trn = app.add_subcommand("train", "Train one fold; writes checkpoint.bin, history.tsv, run_meta.txt");
  trn->add_option("--config", config, "Run config key=value file");
  trn->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
  trn->add_option("--manifest", manifest, "Dataset manifest")->required();
  trn->add_option("--splits", splits, "Splits file")->required();
  trn->add_option("--fold", fold, "Fold id 0-4")->required();
  trn->add_option("--out", out, "Output directory")->required();

  auto* cv = app.add_subcommand("cv", "Cross-validate all folds; writes cv.tsv, summary.json, per-fold checkpoints");
  cv->add_option("--config", config, "Run config key=value file");
  cv->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
  cv->add_option("--manifest", manifest, "Dataset manifest")->required();
  cv->add_option("--splits", splits, "Splits file")->required();
  cv->add_option("--threads", threads, "Parallel folds (0 = hardware concurrency)");
  cv->add_option("--out", out, "Output directory")->required();

  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on one split part with full masks");
  evl->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evl->add_option("--config", config, "Run config that must match the checkpoint");
  evl->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
  evl->add_option("--manifest", manifest, "Dataset manifest")->required();
  evl->add_option("--splits", splits, "Splits file (omit to use every sample)");
  evl->add_option("--fold", fold, "Fold id 0-4");
  evl->add_option("--part", part, "Split part: train, val, test or all");
  evl->add_option("--out", out, "Output metrics file")->required();

  auto* abl = app.add_subcommand("ablate", "Single-stain, leave-one-stain-out and CLS->MT attention tables");
  abl->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  abl->add_option("--manifest", manifest, "Dataset manifest")->required();
  abl->add_option("--splits", splits, "Splits file (omit to use every sample)");
  abl->add_option("--fold", fold, "Fold id 0-4");
  abl->add_option("--part", part, "Split part: train, val, test or all");
  abl->add_option("--out", out, "Output directory (ablation.tsv, ablation.json)")->required();

  auto* expl = app.add_subcommand("explain", "Per-patch attention, class-score and class-attention maps");
  expl->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  expl->add_option("--manifest", manifest, "Dataset manifest (with --sample)");
  expl->add_option("--sample", sample_id, "Sample id to explain");
  expl->add_option("--bag-set", bag_set, "Directory with bagset.tsv of overlapping bags");
  expl->add_flag("--expert-only", expert_only, "Use expert rollout only instead of the two-stage composition");
  expl->add_option("--out", out, "Output directory (scores.tsv and .pgm images)")->required();

  auto* exp = app.add_subcommand("export", "Export penultimate features for external embedding tools");
  exp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  exp->add_option("--manifest", manifest, "Dataset manifest")->required();
  exp->add_option("--splits", splits, "Splits file (omit to use every sample)");
  exp->add_option("--fold", fold, "Fold id 0-4");
  exp->add_option("--part", part, "Split part: train, val, test or all");
  exp->add_flag("--per-modality", per_modality, "Also emit one single-modality row per present stain");
  exp->add_option("--out", out, "Output features file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[config]: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (synth->parsed()) {
      KeyValues kv = spec_path.empty() ? KeyValues{} : KeyValues::load(spec_path);
      for (const auto& o : overrides) kv.apply_override(o);
      const SyntheticSpec spec = SyntheticSpec::from_kv(kv);
      const auto records = generate_synthetic(spec);
      const auto manifest_path = write_dataset(records, spec.n_modalities, out);
      write_file_atomic(join_path(out, "synthetic_spec.txt"), spec.to_text());
      std::cout << "wrote " << records.size() << " samples to " << manifest_path << "\n";
    } else if (split->parsed()) {
      const auto plans = make_splits(load_manifest(manifest), seed);
      write_file_atomic(out, format_splits(plans));
    } else if (trn->parsed()) {
      const RunConfig rc = RunConfig::load(config, overrides);
      const auto records = load_dataset(manifest);
      const auto plans = parse_splits(read_file(splits), splits);
      const auto it = std::find_if(plans.begin(), plans.end(), [&](const SplitPlan& p) { return p.fold == fold; });
      if (it == plans.end()) fail(ErrorCode::kData, splits + ": no fold " + std::to_string(fold));
      auto result = train(records, *it, rc.model, rc.train);
      save_checkpoint(join_path(out, "checkpoint.bin"), *result.model);
      write_file_atomic(join_path(out, "history.tsv"), format_history(result.history));
      write_file_atomic(join_path(out, "run_meta.txt"),
                        rc.metadata_text() + "fold=" + std::to_string(fold) + "\nbest_epoch=" +
                            std::to_string(result.best_epoch) + "\n");
    } else if (cv->parsed()) {
      const RunConfig rc = RunConfig::load(config, overrides);
      const auto records = load_dataset(manifest);
      const auto plans = parse_splits(read_file(splits), splits);
      const CvResult result = run_cv(records, plans, rc.model, rc.train, threads);
      for (const auto& f : result.folds) {
        const std::string dir = join_path(out, "fold" + std::to_string(f.fold));
        save_checkpoint(join_path(dir, "checkpoint.bin"), *f.training.model);
        write_file_atomic(join_path(dir, "history.tsv"), format_history(f.training.history));
        write_file_atomic(join_path(dir, "test_metrics.tsv"), f.test.to_text());
      }
      write_file_atomic(join_path(out, "cv.tsv"), result.to_text());
      write_file_atomic(join_path(out, "summary.json"), result.summary_json());
      write_file_atomic(join_path(out, "run_meta.txt"), rc.metadata_text());
      std::cout << result.to_text();
    } else if (evl->parsed()) {
      const auto model = load_checked(checkpoint, config, overrides);
      const auto records = load_part(manifest, splits, fold, part);
      check_widths(*model, records);
      const Metrics metrics = evaluate(*model, records);
      write_file_atomic(out, metrics.to_text());
      std::cout << "accuracy\t" << format_double(metrics.accuracy) << "\nmacro_f1\t" << format_double(metrics.macro_f1)
                << "\n";
    } else if (abl->parsed()) {
      const auto model = load_checkpoint(checkpoint);
      const auto records = load_part(manifest, splits, fold, part);
      check_widths(*model, records);
      const AblationReport report = ablate(*model, records);
      write_file_atomic(join_path(out, "ablation.tsv"), report.to_text());
      write_file_atomic(join_path(out, "ablation.json"), report.summary_json());
    } else if (expl->parsed()) {
      if (sample_id.empty() == bag_set.empty()) fail(ErrorCode::kConfig, "explain needs exactly one of --sample, --bag-set");
      const auto model = load_checkpoint(checkpoint);
      const auto mode = expert_only ? PatchAttentionMode::kExpertOnly : PatchAttentionMode::kTwoStage;
      PatchScoreMap map;
      if (!sample_id.empty()) {
        if (manifest.empty()) fail(ErrorCode::kConfig, "--sample requires --manifest");
        const auto records = load_dataset(manifest);
        const auto chosen = select_samples(records, {sample_id});
        check_widths(*model, chosen);
        OverlapBagSet set;
        set.variants = chosen;
        for (auto& [m, bag] : set.variants[0].bags) {
          for (std::size_t i = 0; i < bag.patches(); ++i) bag.coords.push_back({static_cast<std::int32_t>(i), 0});
        }
        map = explain_bag_set(*model, set, mode);
      } else {
        const OverlapBagSet set = load_bag_set(bag_set);
        for (const auto& v : set.variants) check_widths(*model, {v});
        map = explain_bag_set(*model, set, mode);
      }
      write_file_atomic(join_path(out, "scores.tsv"), format_score_map(map));
      std::vector<std::size_t> modalities;
      for (const auto& e : map.entries) {
        if (modalities.empty() || modalities.back() != e.modality) modalities.push_back(e.modality);
      }
      for (const auto m : modalities) {
        const std::string stem = modality_name(m);
        write_file_atomic(join_path(out, stem + ".attention.pgm"), render_pgm(map, m, ScoreChannel::kRolloutAttention));
        write_file_atomic(join_path(out, stem + ".class_attention.pgm"),
                          render_pgm(map, m, ScoreChannel::kClassAttention));
        for (std::size_t c = 0; c < model->config().n_classes && c < kClassNames.size(); ++c) {
          write_file_atomic(join_path(out, stem + ".p_" + std::string(kClassNames[c]) + ".pgm"),
                            render_pgm(map, m, ScoreChannel::kClassProbability, c));
        }
      }
    } else if (exp->parsed()) {
      const auto model = load_checkpoint(checkpoint);
      const auto records = load_part(manifest, splits, fold, part);
      check_widths(*model, records);
      std::vector<std::size_t> singles;
      if (per_modality) {
        for (std::size_t m = 0; m < model->config().n_modalities; ++m) singles.push_back(m);
      }
      write_file_atomic(out, format_features(export_features(*model, records, singles)));
    }
  } catch (const Error& e) {
    std::cerr << "error[" << error_class_name(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace unicorn::cli
