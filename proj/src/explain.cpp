#include "unicorn/explain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "unicorn/byte_io.hpp"
#include "unicorn/data_io.hpp"
#include "unicorn/error.hpp"
#include "unicorn/ops.hpp"
#include "unicorn/training.hpp"

namespace unicorn {

namespace fs = std::filesystem;

Tensor rollout(std::span<const AttentionRecord> records) {
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "rollout of zero blocks");
  const std::size_t t = records.front().tokens;
  std::vector<double> result(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) result[i * t + i] = 1.0;
  std::vector<double> mixed(t * t), next(t * t);
  for (const auto& record : records) {
    if (record.tokens != t) {
      fail(ErrorCode::kShape, "rollout: token count " + std::to_string(record.tokens) + " != " + std::to_string(t));
    }
    const Tensor mean = head_mean_attention(record);
    for (std::size_t r = 0; r < t; ++r) {
      double row_sum = 0.0;
      for (std::size_t c = 0; c < t; ++c) {
        const double v = 0.5 * (mean.at(r * t + c) + (r == c ? 1.0 : 0.0));
        mixed[r * t + c] = v;
        row_sum += v;
      }
      for (std::size_t c = 0; c < t; ++c) mixed[r * t + c] /= row_sum;
    }
    // result <- mixed . result
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t k = 0; k < t; ++k) {
        const double a = mixed[r * t + k];
        for (std::size_t c = 0; c < t; ++c) next[r * t + c] += a * result[k * t + c];
      }
    result.swap(next);
  }
  return Tensor::from({t, t}, std::move(result));
}

std::vector<std::optional<std::vector<double>>> patch_attention(const ForwardTrace& trace, std::size_t n_modalities,
                                                                PatchAttentionMode mode) {
  std::vector<std::optional<std::vector<double>>> out(n_modalities);
  if (trace.aggregator_modalities.empty() || trace.aggregator_attention.empty()) {
    fail(ErrorCode::kInvalidArgument, "patch_attention needs a two-stage trace");
  }
  const Tensor aggregate = rollout(trace.aggregator_attention);
  for (std::size_t j = 0; j < trace.aggregator_modalities.size(); ++j) {
    const std::size_t m = trace.aggregator_modalities[j];
    if (m >= n_modalities) continue;
    const auto& records = trace.expert_attention.at(m);
    if (records.empty()) fail(ErrorCode::kInvalidArgument, "trace lacks expert attention for " + modality_name(m));
    const Tensor expert = rollout(records);
    const std::size_t t = expert.dim(0);
    const double cls_to_mt = mode == PatchAttentionMode::kTwoStage ? aggregate.at(0, j + 1) : 1.0;
    std::vector<double> weights(t - 1);
    for (std::size_t i = 1; i < t; ++i) weights[i - 1] = cls_to_mt * expert.at(0, i);
    out[m] = std::move(weights);
  }
  return out;
}

std::vector<double> patch_class_scores(const Model& model, const FeatureBag& single_patch) {
  if (!single_patch.matrix.defined() || single_patch.matrix.rank() != 2 || single_patch.patches() != 1) {
    fail(ErrorCode::kInvalidArgument, "patch_class_scores needs exactly one patch");
  }
  SampleRecord sample;
  sample.sample_id = single_patch.slide_id;
  sample.bags.emplace(single_patch.modality, single_patch);
  return predict(model, sample, ModalityMask::single(single_patch.modality)).probabilities;
}

std::vector<double> class_attention(std::span<const double> attention,
                                    const std::vector<std::vector<double>>& class_scores, std::size_t predicted_class) {
  if (attention.size() != class_scores.size()) fail(ErrorCode::kShape, "class_attention: patch counts differ");
  std::vector<double> out(attention.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = attention[i] * class_scores[i].at(predicted_class);
  return out;
}

void OverlapBagSet::validate() const {
  if (variants.empty()) fail(ErrorCode::kData, "overlap bag set is empty");
  for (const auto& v : variants) {
    if (v.bags.empty()) fail(ErrorCode::kData, "overlap bag set variant without bags");
    for (const auto& [m, bag] : v.bags) {
      if (bag.coords.size() != bag.patches()) {
        fail(ErrorCode::kData, "overlap bag " + bag.slide_id + " lacks a coordinate for every patch");
      }
    }
  }
}

namespace {

void sort_entries(PatchScoreMap& map) {
  std::sort(map.entries.begin(), map.entries.end(), [](const PatchScore& a, const PatchScore& b) {
    return std::tie(a.modality, a.coord.y, a.coord.x) < std::tie(b.modality, b.coord.y, b.coord.x);
  });
}

}  // namespace

PatchScoreMap score_sample(const Model& model, const SampleRecord& sample, PatchAttentionMode mode) {
  const std::size_t n_modalities = model.config().n_modalities;
  ForwardTrace trace;
  {
    NoGradGuard no_grad;
    trace = model.forward(sample, full_mask(sample, n_modalities), nullptr, false);
  }
  PatchScoreMap map;
  map.predicted_class = argmax(trace.probabilities);
  const auto attention = patch_attention(trace, n_modalities, mode);
  for (std::size_t m = 0; m < n_modalities; ++m) {
    if (!attention[m]) continue;
    const FeatureBag& bag = sample.bags.at(m);
    std::vector<std::vector<double>> scores;
    for (std::size_t i = 0; i < bag.patches(); ++i) {
      FeatureBag single;
      single.modality = m;
      single.slide_id = bag.slide_id;
      single.matrix = ops::slice_rows(bag.matrix, i, 1);
      scores.push_back(patch_class_scores(model, single));
    }
    const auto cls_att = class_attention(*attention[m], scores, map.predicted_class);
    for (std::size_t i = 0; i < bag.patches(); ++i) {
      PatchScore s;
      s.modality = m;
      s.coord = i < bag.coords.size() ? bag.coords[i] : PatchCoord{static_cast<std::int32_t>(i), 0};
      s.rollout_attention = (*attention[m])[i];
      s.class_probs = std::move(scores[i]);
      s.class_attention = cls_att[i];
      map.entries.push_back(std::move(s));
    }
  }
  sort_entries(map);
  return map;
}

PatchScoreMap aggregate_overlaps(const OverlapBagSet& bag_set, const std::vector<PatchScoreMap>& per_bag) {
  bag_set.validate();
  if (per_bag.size() != bag_set.variants.size()) fail(ErrorCode::kData, "one score map per overlap bag is required");

  struct Accumulator {
    std::size_t count = 0;
    double rollout = 0.0, class_att = 0.0;
    std::vector<double> probs;
  };
  using Key = std::tuple<std::size_t, std::int32_t, std::int32_t>;
  std::map<Key, Accumulator> acc;
  std::map<std::size_t, std::size_t> votes;

  for (std::size_t v = 0; v < per_bag.size(); ++v) {
    const auto& variant = bag_set.variants[v];
    std::map<Key, const PatchScore*> scored;
    for (const auto& e : per_bag[v].entries) scored[{e.modality, e.coord.y, e.coord.x}] = &e;
    for (const auto& [m, bag] : variant.bags) {
      for (const auto& c : bag.coords) {
        const Key key{m, c.y, c.x};
        const auto it = scored.find(key);
        if (it == scored.end()) {
          fail(ErrorCode::kData, "coordinate (" + std::to_string(c.x) + ", " + std::to_string(c.y) + ") of " +
                                     modality_name(m) + " has zero coverage in score map " + std::to_string(v));
        }
        Accumulator& a = acc[key];
        const PatchScore& s = *it->second;
        ++a.count;
        a.rollout += s.rollout_attention;
        a.class_att += s.class_attention;
        if (a.probs.empty()) a.probs.assign(s.class_probs.size(), 0.0);
        for (std::size_t k = 0; k < s.class_probs.size(); ++k) a.probs[k] += s.class_probs[k];
      }
    }
    ++votes[per_bag[v].predicted_class];
  }

  PatchScoreMap out;
  std::size_t best_votes = 0;
  for (const auto& [cls, n] : votes) {
    if (n > best_votes) {
      best_votes = n;
      out.predicted_class = cls;
    }
  }
  for (auto& [key, a] : acc) {
    PatchScore s;
    s.modality = std::get<0>(key);
    s.coord = {std::get<2>(key), std::get<1>(key)};
    const double inv = 1.0 / static_cast<double>(a.count);
    s.rollout_attention = a.rollout * inv;
    s.class_attention = a.class_att * inv;
    s.class_probs = std::move(a.probs);
    for (double& p : s.class_probs) p *= inv;
    out.entries.push_back(std::move(s));
  }

  // Min-max per modality and scalar channel.
  std::map<std::size_t, std::vector<PatchScore*>> by_modality;
  for (auto& e : out.entries) by_modality[e.modality].push_back(&e);
  for (auto& [m, group] : by_modality) {
    for (double PatchScore::*channel : {&PatchScore::rollout_attention, &PatchScore::class_attention}) {
      double lo = group.front()->*channel, hi = lo;
      for (const PatchScore* e : group) {
        lo = std::min(lo, e->*channel);
        hi = std::max(hi, e->*channel);
      }
      const double range = hi - lo;
      for (PatchScore* e : group) e->*channel = range > 0.0 ? (e->*channel - lo) / range : 0.0;
    }
  }
  sort_entries(out);
  return out;
}

PatchScoreMap explain_bag_set(const Model& model, const OverlapBagSet& bag_set, PatchAttentionMode mode) {
  bag_set.validate();
  std::vector<PatchScoreMap> maps;
  maps.reserve(bag_set.variants.size());
  for (const auto& variant : bag_set.variants) maps.push_back(score_sample(model, variant, mode));
  return aggregate_overlaps(bag_set, maps);
}

std::string format_score_map(const PatchScoreMap& map) {
  std::string out = "# predicted_class\t" + std::string(kClassNames.at(map.predicted_class)) + "\n";
  out += "# modality\tx\ty\trollout_attention\tclass_attention";
  for (const auto name : kClassNames) out += "\tp_" + std::string(name);
  out += "\n";
  for (const auto& e : map.entries) {
    out += modality_name(e.modality) + "\t" + std::to_string(e.coord.x) + "\t" + std::to_string(e.coord.y) + "\t" +
           format_double(e.rollout_attention) + "\t" + format_double(e.class_attention);
    for (const double p : e.class_probs) out += "\t" + format_double(p);
    out += "\n";
  }
  return out;
}

std::string render_pgm(const PatchScoreMap& map, std::size_t modality, ScoreChannel channel, std::size_t class_index) {
  std::int32_t max_x = -1, max_y = -1;
  for (const auto& e : map.entries) {
    if (e.modality != modality) continue;
    if (e.coord.x < 0 || e.coord.y < 0) fail(ErrorCode::kData, "render_pgm needs non-negative grid coordinates");
    max_x = std::max(max_x, e.coord.x);
    max_y = std::max(max_y, e.coord.y);
  }
  if (max_x < 0) fail(ErrorCode::kData, "no patches for modality " + modality_name(modality));
  const auto width = static_cast<std::size_t>(max_x) + 1;
  const auto height = static_cast<std::size_t>(max_y) + 1;
  std::string pixels(width * height, '\0');
  for (const auto& e : map.entries) {
    if (e.modality != modality) continue;
    double v = 0.0;
    switch (channel) {
      case ScoreChannel::kRolloutAttention: v = e.rollout_attention; break;
      case ScoreChannel::kClassAttention: v = e.class_attention; break;
      case ScoreChannel::kClassProbability: v = e.class_probs.at(class_index); break;
    }
    const auto level = static_cast<long>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    pixels[static_cast<std::size_t>(e.coord.y) * width + static_cast<std::size_t>(e.coord.x)] = static_cast<char>(level);
  }
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n" + pixels;
}

OverlapBagSet load_bag_set(const std::string& dir) {
  const std::string index_path = (fs::path(dir) / "bagset.tsv").string();
  const std::string text = read_file(index_path);
  std::map<std::size_t, SampleRecord> variants;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::size_t index = 0;
    std::string bag_path, coords_path;
    if (!(fields >> index >> bag_path >> coords_path)) {
      fail(ErrorCode::kData, index_path + ":" + std::to_string(line_no) + ": expected index, bag, coords");
    }
    FeatureBag bag = read_bag((fs::path(dir) / bag_path).string());
    std::istringstream coords(read_file((fs::path(dir) / coords_path).string()));
    PatchCoord c;
    while (coords >> c.x >> c.y) bag.coords.push_back(c);
    SampleRecord& variant = variants[index];
    variant.sample_id = "variant" + std::to_string(index);
    const std::size_t m = bag.modality;
    if (!variant.bags.emplace(m, std::move(bag)).second) {
      fail(ErrorCode::kData, index_path + ": variant " + std::to_string(index) + " lists " + modality_name(m) + " twice");
    }
  }
  OverlapBagSet set;
  for (auto& [index, v] : variants) set.variants.push_back(std::move(v));
  set.validate();
  return set;
}

}  // namespace unicorn
