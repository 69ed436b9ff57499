#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "unicorn/byte_io.hpp"
#include "unicorn/data_io.hpp"
#include "unicorn/error.hpp"
#include "unicorn/rng.hpp"

namespace unicorn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto tab = line.find('\t');
    out.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line = line.substr(tab + 1);
  }
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

}  // namespace

std::size_t ManifestEntry::present_count() const {
  return static_cast<std::size_t>(std::count_if(bag_paths.begin(), bag_paths.end(), [](const auto& p) { return p.has_value(); }));
}

std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::string& base_dir, std::string_view context) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::size_t columns = 0;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string where = std::string(context) + ":" + std::to_string(line_no);
    const auto fields = split_tabs(line);
    if (fields.size() < 5) fail(ErrorCode::kData, where + ": expected at least 5 tab-separated fields");
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns) fail(ErrorCode::kData, where + ": inconsistent column count");
    ManifestEntry e;
    e.sample_id = std::string(fields[0]);
    e.individual_id = std::string(fields[1]);
    e.segment_id = std::string(fields[2]);
    if (e.sample_id.empty() || e.individual_id.empty()) fail(ErrorCode::kData, where + ": empty identifier");
    const auto label = label_from_name(fields[3]);
    if (!label) fail(ErrorCode::kUnknownLabel, where + ": unknown label '" + std::string(fields[3]) + "'");
    e.label = *label;
    if (!seen.insert(e.sample_id).second) fail(ErrorCode::kDuplicateId, where + ": duplicate sample_id " + e.sample_id);
    for (std::size_t i = 4; i < fields.size(); ++i) {
      if (fields[i].empty()) {
        e.bag_paths.emplace_back(std::nullopt);
      } else {
        const fs::path p(fields[i]);
        e.bag_paths.emplace_back(p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string());
      }
    }
    if (e.present_count() == 0) fail(ErrorCode::kData, where + ": sample " + e.sample_id + " has no bags");
    entries.push_back(std::move(e));
  });
  if (entries.empty()) fail(ErrorCode::kData, std::string(context) + ": no records");
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  if (!fs::exists(path)) fail(ErrorCode::kIo, "manifest not found: " + path);
  const std::string base = fs::path(path).parent_path().string();
  auto entries = parse_manifest(read_file(path), base, path);
  for (const auto& e : entries) {
    for (const auto& p : e.bag_paths) {
      if (p && !fs::exists(*p)) fail(ErrorCode::kData, path + ": sample " + e.sample_id + ": missing file " + *p);
    }
  }
  return entries;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries, const std::string& base_dir) {
  std::string out = "# sample_id\tindividual_id\tsegment_id\tlabel";
  const std::size_t columns = entries.empty() ? 0 : entries.front().bag_paths.size();
  for (std::size_t m = 0; m < columns; ++m) out += "\t" + modality_name(m);
  out += "\n";
  for (const auto& e : entries) {
    out += e.sample_id + "\t" + e.individual_id + "\t" + e.segment_id + "\t" + std::string(kClassNames.at(e.label));
    for (const auto& p : e.bag_paths) {
      out += "\t";
      if (p) out += fs::path(*p).lexically_relative(base_dir).generic_string();
    }
    out += "\n";
  }
  return out;
}

std::vector<SampleRecord> load_samples(const std::vector<ManifestEntry>& entries) {
  std::vector<SampleRecord> records;
  records.reserve(entries.size());
  std::optional<std::size_t> width;
  for (const auto& e : entries) {
    SampleRecord s;
    s.sample_id = e.sample_id;
    s.individual_id = e.individual_id;
    s.segment_id = e.segment_id;
    s.label = e.label;
    for (std::size_t m = 0; m < e.bag_paths.size(); ++m) {
      if (!e.bag_paths[m]) continue;
      FeatureBag bag = read_bag(*e.bag_paths[m]);
      if (bag.modality != m) {
        fail(ErrorCode::kData, *e.bag_paths[m] + ": file declares modality " + std::to_string(bag.modality) +
                                   " but is listed in column " + modality_name(m));
      }
      if (width && *width != bag.width()) {
        fail(ErrorCode::kData, *e.bag_paths[m] + ": width " + std::to_string(bag.width()) + " differs from " +
                                   std::to_string(*width));
      }
      width = bag.width();
      s.bags.emplace(m, std::move(bag));
    }
    records.push_back(std::move(s));
  }
  return records;
}

std::vector<SampleRecord> load_dataset(const std::string& manifest_path) {
  return load_samples(load_manifest(manifest_path));
}

namespace {

struct IdTriple {
  std::string sample_id;
  std::string individual_id;
};

std::vector<SplitPlan> make_splits_impl(const std::vector<IdTriple>& items, std::uint64_t seed) {
  std::set<std::string> unique;
  for (const auto& it : items) unique.insert(it.individual_id);
  if (unique.size() < kNumFolds) {
    fail(ErrorCode::kData, "make_splits needs at least " + std::to_string(kNumFolds) + " individuals, got " +
                               std::to_string(unique.size()));
  }
  std::vector<std::string> individuals(unique.begin(), unique.end());
  Rng rng = Rng(seed).split("splits");
  rng.shuffle(individuals);
  std::map<std::string, std::size_t> group_of;
  const std::size_t n = individuals.size();
  for (std::size_t i = 0; i < n; ++i) group_of[individuals[i]] = i * kNumFolds / n;

  std::vector<SplitPlan> plans(kNumFolds);
  for (std::size_t k = 0; k < kNumFolds; ++k) {
    plans[k].fold = k;
    for (const auto& it : items) {
      const std::size_t g = group_of.at(it.individual_id);
      if (g == k) {
        plans[k].test.push_back(it.sample_id);
      } else if (g == (k + 1) % kNumFolds) {
        plans[k].val.push_back(it.sample_id);
      } else {
        plans[k].train.push_back(it.sample_id);
      }
    }
  }
  return plans;
}

}  // namespace

std::vector<SplitPlan> make_splits(const std::vector<SampleRecord>& records, std::uint64_t seed) {
  std::vector<IdTriple> items;
  for (const auto& r : records) items.push_back({r.sample_id, r.individual_id});
  return make_splits_impl(items, seed);
}

std::vector<SplitPlan> make_splits(const std::vector<ManifestEntry>& entries, std::uint64_t seed) {
  std::vector<IdTriple> items;
  for (const auto& e : entries) items.push_back({e.sample_id, e.individual_id});
  return make_splits_impl(items, seed);
}

std::string format_splits(const std::vector<SplitPlan>& plans) {
  std::string out = "# fold\tpart\tsample_id\n";
  for (const auto& p : plans) {
    for (const auto& [part, ids] : {std::pair{"train", &p.train}, {"val", &p.val}, {"test", &p.test}}) {
      for (const auto& id : *ids) out += std::to_string(p.fold) + "\t" + part + "\t" + id + "\n";
    }
  }
  return out;
}

std::vector<SplitPlan> parse_splits(std::string_view text, std::string_view context) {
  std::map<std::size_t, SplitPlan> plans;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string where = std::string(context) + ":" + std::to_string(line_no);
    const auto fields = split_tabs(line);
    if (fields.size() != 3) fail(ErrorCode::kData, where + ": expected fold, part, sample_id");
    std::size_t fold = 0;
    for (const char c : fields[0]) {
      if (c < '0' || c > '9') fail(ErrorCode::kData, where + ": bad fold id");
      fold = fold * 10 + static_cast<std::size_t>(c - '0');
    }
    if (fields[0].empty() || fold >= kNumFolds) fail(ErrorCode::kData, where + ": fold id out of range");
    SplitPlan& p = plans[fold];
    p.fold = fold;
    const std::string id(fields[2]);
    if (fields[1] == "train") {
      p.train.push_back(id);
    } else if (fields[1] == "val") {
      p.val.push_back(id);
    } else if (fields[1] == "test") {
      p.test.push_back(id);
    } else {
      fail(ErrorCode::kData, where + ": unknown part '" + std::string(fields[1]) + "'");
    }
  });
  std::vector<SplitPlan> out;
  for (auto& [fold, plan] : plans) out.push_back(std::move(plan));
  return out;
}

std::vector<SampleRecord> select_samples(const std::vector<SampleRecord>& records, const std::vector<std::string>& ids) {
  std::map<std::string_view, const SampleRecord*> by_id;
  for (const auto& r : records) by_id[r.sample_id] = &r;
  std::vector<SampleRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorCode::kData, "split references unknown sample_id " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace unicorn
