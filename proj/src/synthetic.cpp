#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "unicorn/byte_io.hpp"
#include "unicorn/data_io.hpp"
#include "unicorn/error.hpp"
#include "unicorn/kv.hpp"
#include "unicorn/rng.hpp"

namespace unicorn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join_modalities(const std::vector<std::size_t>& ms) {
  std::string out;
  for (const auto m : ms) {
    if (!out.empty()) out += ",";
    out += modality_name(m);
  }
  return out;
}

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> u(dim);
  double norm = 0.0;
  do {
    for (double& v : u) v = rng.normal();
    norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
  } while (norm < 1e-12);
  for (double& v : u) v /= norm;
  return u;
}

std::size_t draw_weighted(const std::vector<double>& weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double x = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (x < weights[i]) return i;
    x -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, "synthetic spec: " + what);
  };
  check(n_individuals >= 1, "n_individuals must be >= 1");
  check(segments_per_individual >= 1, "segments_per_individual must be >= 1");
  check(n_modalities >= 1 && n_modalities <= kMaxModalities, "n_modalities must be in [1, 32]");
  check(feat_dim >= 1, "feat_dim must be >= 1");
  check(patches_min >= 1 && patches_min <= patches_max, "need 1 <= patches_min <= patches_max");
  check(signal_strength >= 0.0 && std::isfinite(signal_strength), "signal_strength must be finite and >= 0");
  check(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma must be finite and >= 0");
  check(signal_fraction_min >= 0.0 && signal_fraction_min <= signal_fraction_max && signal_fraction_max <= 1.0,
        "need 0 <= signal_fraction_min <= signal_fraction_max <= 1");
  check(missing_bag_p >= 0.0 && missing_bag_p < 1.0, "missing_bag_p must lie in [0, 1)");
  if (task == SyntheticTask::kPlanted) {
    check(class_weights.size() == kNumClasses, "class_weights needs 5 entries");
    check(std::accumulate(class_weights.begin(), class_weights.end(), 0.0) > 0.0, "class_weights sum to zero");
    check(class_signal.size() == kNumClasses, "class_signal needs an entry per class");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      check(class_weights[c] >= 0.0, "negative class weight");
      if (class_weights[c] > 0.0) {
        check(!class_signal[c].empty(), "class " + std::string(kClassNames[c]) + " has no signal modality");
      }
      for (const auto m : class_signal[c]) check(m < n_modalities, "signal modality out of range");
    }
  } else {
    check(xor_a < n_modalities && xor_b < n_modalities && xor_a != xor_b, "xor_a/xor_b must be distinct modalities");
  }
}

SyntheticSpec SyntheticSpec::reference() {
  SyntheticSpec s;
  s.class_signal = {{0, 1}, {0, 1}, {0}, {2}, {2}};
  return s;
}

SyntheticSpec SyntheticSpec::xor_reference() {
  SyntheticSpec s;
  s.task = SyntheticTask::kXor;
  s.xor_a = 0;
  s.xor_b = 2;
  s.class_signal = reference().class_signal;
  return s;
}

SyntheticSpec SyntheticSpec::from_kv(const KeyValues& kv) {
  std::vector<std::string> known = {"task",          "n_individuals",       "segments_per_individual",
                                    "n_modalities",  "feat_dim",            "patches_min",
                                    "patches_max",   "signal_strength",     "noise_sigma",
                                    "signal_fraction_min", "signal_fraction_max", "missing_bag_p",
                                    "class_weights", "xor_a",               "xor_b",
                                    "seed"};
  for (const auto name : kClassNames) known.push_back("signal." + std::string(name));
  kv.reject_unknown(known);

  SyntheticSpec s = reference();
  const std::string task = kv.get_string("task", "planted");
  if (task == "planted") {
    s.task = SyntheticTask::kPlanted;
  } else if (task == "xor") {
    s.task = SyntheticTask::kXor;
  } else {
    fail(ErrorCode::kConfig, "synthetic spec: unknown task '" + task + "'");
  }
  s.n_individuals = kv.get_size("n_individuals", s.n_individuals);
  s.segments_per_individual = kv.get_size("segments_per_individual", s.segments_per_individual);
  s.n_modalities = kv.get_size("n_modalities", s.n_modalities);
  s.feat_dim = kv.get_size("feat_dim", s.feat_dim);
  s.patches_min = kv.get_size("patches_min", s.patches_min);
  s.patches_max = kv.get_size("patches_max", s.patches_max);
  s.signal_strength = kv.get_double("signal_strength", s.signal_strength);
  s.noise_sigma = kv.get_double("noise_sigma", s.noise_sigma);
  s.signal_fraction_min = kv.get_double("signal_fraction_min", s.signal_fraction_min);
  s.signal_fraction_max = kv.get_double("signal_fraction_max", s.signal_fraction_max);
  s.missing_bag_p = kv.get_double("missing_bag_p", s.missing_bag_p);
  s.seed = kv.get_u64("seed", s.seed);
  if (kv.contains("class_weights")) {
    s.class_weights.clear();
    for (const auto& item : split_commas(kv.get_string("class_weights", ""))) {
      KeyValues tmp;
      tmp.set("class_weights", item);
      s.class_weights.push_back(tmp.get_double("class_weights", 0.0));
    }
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string key = "signal." + std::string(kClassNames[c]);
    if (!kv.contains(key)) continue;
    s.class_signal[c].clear();
    for (const auto& name : split_commas(kv.get_string(key, ""))) {
      const auto m = modality_from_name(name);
      if (!m) fail(ErrorCode::kConfig, "synthetic spec: " + key + ": unknown modality '" + name + "'");
      s.class_signal[c].push_back(*m);
    }
  }
  const auto parse_modality = [&](const char* key, std::size_t fallback) {
    if (!kv.contains(key)) return fallback;
    const auto m = modality_from_name(kv.get_string(key, ""));
    if (!m) fail(ErrorCode::kConfig, std::string("synthetic spec: ") + key + ": unknown modality");
    return *m;
  };
  s.xor_a = parse_modality("xor_a", s.xor_a);
  s.xor_b = parse_modality("xor_b", s.xor_b);
  s.validate();
  return s;
}

std::string SyntheticSpec::to_text() const {
  KeyValues kv;
  kv.set("task", task == SyntheticTask::kPlanted ? "planted" : "xor");
  kv.set("n_individuals", std::to_string(n_individuals));
  kv.set("segments_per_individual", std::to_string(segments_per_individual));
  kv.set("n_modalities", std::to_string(n_modalities));
  kv.set("feat_dim", std::to_string(feat_dim));
  kv.set("patches_min", std::to_string(patches_min));
  kv.set("patches_max", std::to_string(patches_max));
  kv.set("signal_strength", format_double(signal_strength));
  kv.set("noise_sigma", format_double(noise_sigma));
  kv.set("signal_fraction_min", format_double(signal_fraction_min));
  kv.set("signal_fraction_max", format_double(signal_fraction_max));
  kv.set("missing_bag_p", format_double(missing_bag_p));
  std::string weights;
  for (const double w : class_weights) weights += (weights.empty() ? "" : ",") + format_double(w);
  kv.set("class_weights", weights);
  for (std::size_t c = 0; c < class_signal.size() && c < kNumClasses; ++c) {
    kv.set("signal." + std::string(kClassNames[c]), join_modalities(class_signal[c]));
  }
  kv.set("xor_a", modality_name(xor_a));
  kv.set("xor_b", modality_name(xor_b));
  kv.set("seed", std::to_string(seed));
  return kv.serialize();
}

std::vector<SampleRecord> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  Rng direction_rng = root.split("directions");
  Rng label_rng = root.split("labels");
  Rng patch_rng = root.split("patches");
  Rng missing_rng = root.split("missing");

  // directions[c][m] for planted signals; the xor task uses class slot 0.
  std::vector<std::vector<std::vector<double>>> directions(kNumClasses);
  for (auto& per_class : directions) {
    for (std::size_t m = 0; m < spec.n_modalities; ++m) per_class.push_back(random_unit(spec.feat_dim, direction_rng));
  }

  std::vector<SampleRecord> records;
  char buf[64];
  for (std::size_t ind = 0; ind < spec.n_individuals; ++ind) {
    for (std::size_t seg = 0; seg < spec.segments_per_individual; ++seg) {
      SampleRecord s;
      std::snprintf(buf, sizeof buf, "s%04zu_%zu", ind, seg);
      s.sample_id = buf;
      std::snprintf(buf, sizeof buf, "ind%04zu", ind);
      s.individual_id = buf;
      s.segment_id = "seg" + std::to_string(seg);

      std::vector<bool> carries(spec.n_modalities, false);
      std::size_t direction_class = 0;
      if (spec.task == SyntheticTask::kPlanted) {
        s.label = draw_weighted(spec.class_weights, label_rng);
        for (const auto m : spec.class_signal[s.label]) carries[m] = true;
        direction_class = s.label;
      } else {
        const bool a = label_rng.bernoulli(0.5);
        const bool b = label_rng.bernoulli(0.5);
        carries[spec.xor_a] = a;
        carries[spec.xor_b] = b;
        s.label = (a != b) ? 1 : 0;
      }

      for (std::size_t m = 0; m < spec.n_modalities; ++m) {
        const std::size_t n = spec.patches_min + patch_rng.uniform_index(spec.patches_max - spec.patches_min + 1);
        std::vector<double> values(n * spec.feat_dim);
        for (double& v : values) v = spec.noise_sigma * patch_rng.normal();
        if (carries[m]) {
          const double fraction =
              spec.signal_fraction_min + (spec.signal_fraction_max - spec.signal_fraction_min) * patch_rng.uniform();
          const auto n_signal = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
          std::vector<std::size_t> order(n);
          std::iota(order.begin(), order.end(), 0);
          patch_rng.shuffle(order);
          const auto& u = directions[direction_class][m];
          for (std::size_t i = 0; i < n_signal; ++i) {
            double* row = values.data() + order[i] * spec.feat_dim;
            for (std::size_t j = 0; j < spec.feat_dim; ++j) row[j] += spec.signal_strength * u[j];
          }
        }
        // Match the f32 precision of the on-disk format.
        for (double& v : values) v = static_cast<double>(static_cast<float>(v));
        FeatureBag bag;
        bag.modality = m;
        bag.slide_id = s.sample_id + "." + modality_name(m);
        bag.matrix = Tensor::from({n, spec.feat_dim}, std::move(values));
        s.bags.emplace(m, std::move(bag));
      }

      if (spec.missing_bag_p > 0.0) {
        std::vector<std::size_t> dropped;
        for (std::size_t m = 0; m < spec.n_modalities; ++m) {
          if (missing_rng.bernoulli(spec.missing_bag_p)) dropped.push_back(m);
        }
        if (dropped.size() == spec.n_modalities) {
          dropped.erase(dropped.begin() + static_cast<std::ptrdiff_t>(missing_rng.uniform_index(dropped.size())));
        }
        for (const auto m : dropped) s.bags.erase(m);
      }
      records.push_back(std::move(s));
    }
  }
  return records;
}

std::string write_dataset(const std::vector<SampleRecord>& records, std::size_t n_modalities,
                          const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "bags");
  std::vector<ManifestEntry> entries;
  for (const auto& s : records) {
    ManifestEntry e;
    e.sample_id = s.sample_id;
    e.individual_id = s.individual_id;
    e.segment_id = s.segment_id;
    e.label = s.label;
    e.bag_paths.resize(n_modalities);
    for (const auto& [m, bag] : s.bags) {
      const auto path = (fs::path(out_dir) / "bags" / (s.sample_id + "." + modality_name(m) + ".bag")).string();
      write_bag(path, bag);
      e.bag_paths.at(m) = path;
    }
    entries.push_back(std::move(e));
  }
  const std::string manifest = (fs::path(out_dir) / "manifest.tsv").string();
  write_file_atomic(manifest, format_manifest(entries, out_dir));
  return manifest;
}

}  // namespace unicorn
