#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "unicorn/byte_io.hpp"
#include "unicorn/data_io.hpp"
#include "unicorn/error.hpp"

using namespace unicorn;
using unicorn::testing::random_tensor;
using unicorn::testing::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

FeatureBag bag_of(Tensor m, std::size_t modality = 0) {
  FeatureBag b;
  b.modality = modality;
  b.matrix = std::move(m);
  return b;
}

void put_u32(std::string& bytes, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

// Nearest-centroid classifier on mean-pooled, concatenated bags; linear in
// the pooled features.
double linear_probe_accuracy(const std::vector<SampleRecord>& train, const std::vector<SampleRecord>& test,
                             std::size_t n_modalities, std::size_t dim) {
  auto pooled = [&](const SampleRecord& s) {
    std::vector<double> f(n_modalities * dim, 0.0);
    for (const auto& [m, bag] : s.bags) {
      const std::size_t n = bag.matrix.dim(0);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < dim; ++c) f[m * dim + c] += bag.matrix.at(r, c) / static_cast<double>(n);
    }
    return f;
  };
  std::vector<std::vector<double>> centroid(kNumClasses, std::vector<double>(n_modalities * dim, 0.0));
  std::vector<double> count(kNumClasses, 0.0);
  for (const auto& s : train) {
    const auto f = pooled(s);
    for (std::size_t i = 0; i < f.size(); ++i) centroid[s.label][i] += f[i];
    count[s.label] += 1.0;
  }
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (double& v : centroid[c]) v /= std::max(count[c], 1.0);
  std::size_t correct = 0;
  for (const auto& s : test) {
    const auto f = pooled(s);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (count[c] == 0.0) continue;
      double d = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - centroid[c][i]) * (f[i] - centroid[c][i]);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("1x1 bag file layout") {
  const std::string bytes = encode_bag(bag_of(Tensor::from({1, 1}, {0.0}), 2));
  // magic 8 + four u32 fields + one f32
  CHECK(bytes.size() == 28);
  CHECK(bytes.substr(0, 8) == std::string("UNIBAG1\0", 8));
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 2);
  CHECK(bytes[16] == 1);
  CHECK(bytes[20] == 1);
  const FeatureBag back = decode_bag(bytes);
  CHECK(back.modality == 2);
  CHECK(back.matrix.shape() == Shape{1, 1});
  CHECK(back.matrix.at(0) == 0.0);
  CHECK(encode_bag(back) == bytes);
}

TEST_CASE("random bag round trip stays within f32 quantization") {
  Rng rng(1);
  const Tensor m = random_tensor({8, 16}, rng, false, 3.0);
  const FeatureBag back = decode_bag(encode_bag(bag_of(m, 1)));
  for (std::size_t i = 0; i < m.numel(); ++i) {
    const double q = static_cast<double>(static_cast<float>(m.at(i)));
    CHECK(back.matrix.at(i) == q);
    CHECK(std::abs(back.matrix.at(i) - m.at(i)) <= std::abs(m.at(i)) * 6e-8);
  }
  // Values already at f32 precision survive bit-exact, twice.
  CHECK(encode_bag(back) == encode_bag(decode_bag(encode_bag(back))));
}

TEST_CASE("bag decoding rejects damaged input") {
  Rng rng(2);
  const std::string bytes = encode_bag(bag_of(random_tensor({3, 4}, rng, false), 0));
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    const ErrorCode code = code_of([&] { decode_bag(std::string_view(bytes).substr(0, len)); });
    if (code != ErrorCode::kTruncated) FAIL_CHECK("prefix " << len << " gave " << error_class_name(code));
  }
  std::string bad = bytes;
  bad[3] = 'X';
  CHECK(code_of([&] { decode_bag(bad); }) == ErrorCode::kBadMagic);
  std::string version = bytes;
  put_u32(version, 8, 7);
  CHECK(code_of([&] { decode_bag(version); }) == ErrorCode::kUnsupportedVersion);
  std::string huge = bytes;
  put_u32(huge, 16, 0xFFFFFFFFu);
  put_u32(huge, 20, 0xFFFFFFFFu);
  CHECK(code_of([&] { decode_bag(huge); }) == ErrorCode::kExtentOverflow);
  CHECK(code_of([&] { decode_bag(bytes + "zz"); }) == ErrorCode::kData);
}

TEST_CASE("bag files on disk") {
  TempDir dir("bags");
  Rng rng(3);
  const Tensor m = random_tensor({5, 3}, rng, false);
  write_bag(dir / "slide7.HE.bag", bag_of(m, 0));
  const FeatureBag back = read_bag(dir / "slide7.HE.bag");
  CHECK(back.slide_id == "slide7.HE");
  CHECK(back.matrix.shape() == Shape{5, 3});
  CHECK(code_of([&] { read_bag(dir / "missing.bag"); }) == ErrorCode::kIo);
}

TEST_CASE("manifest parsing") {
  const std::string text =
      "# sample individual segment label HE EvG vK Movat\n"
      "a\tind1\tseg0\tCFA\tbags/a.HE.bag\tbags/a.EvG.bag\tbags/a.vK.bag\t\n"
      "b\tind2\tseg0\tAIT\tbags/b.HE.bag\tbags/b.EvG.bag\tbags/b.vK.bag\tbags/b.Movat.bag\n";
  const auto entries = parse_manifest(text, "/data");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].label == 4);
  CHECK(entries[1].label == 0);
  CHECK(entries[0].present_count() == 3);
  CHECK_FALSE(entries[0].bag_paths[3].has_value());
  CHECK(*entries[0].bag_paths[0] == "/data/bags/a.HE.bag");
  CHECK(parse_manifest(format_manifest(entries, "/data"), "/data").size() == 2);

  try {
    parse_manifest("x\ti\ts\tAIT\tp\nx\ti\ts\tPIT\tq\n", "/");
    FAIL("expected duplicate id");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateId);
    CHECK(std::string(e.what()).find("duplicate sample_id x") != std::string::npos);
  }
  CHECK(code_of([] { parse_manifest("x\ti\ts\tBAD\tp\n", "/"); }) == ErrorCode::kUnknownLabel);
  CHECK(code_of([] { parse_manifest("x\ti\ts\tAIT\t\t\n", "/"); }) == ErrorCode::kData);
  CHECK(code_of([] { load_manifest("/nonexistent/manifest.tsv"); }) == ErrorCode::kIo);
}

TEST_CASE("label ordering follows severity") {
  const char* names[] = {"AIT", "PIT", "EFA", "LFA", "CFA"};
  for (std::size_t i = 0; i < 5; ++i) CHECK(label_from_name(names[i]) == i);
}

TEST_CASE("written datasets load back identically") {
  TempDir dir("dataset");
  SyntheticSpec spec = SyntheticSpec::reference();
  spec.n_individuals = 6;
  spec.segments_per_individual = 2;
  spec.feat_dim = 8;
  spec.missing_bag_p = 0.3;
  const auto records = generate_synthetic(spec);
  const std::string manifest = write_dataset(records, spec.n_modalities, dir.str());
  const auto loaded = load_dataset(manifest);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].sample_id == records[i].sample_id);
    CHECK(loaded[i].label == records[i].label);
    REQUIRE(loaded[i].bags.size() == records[i].bags.size());
    for (const auto& [m, bag] : records[i].bags) {
      const auto& other = loaded[i].bags.at(m).matrix;
      CHECK(std::equal(bag.matrix.data().begin(), bag.matrix.data().end(), other.data().begin()));
    }
  }
  std::filesystem::remove(std::filesystem::path(dir.str()) / "bags" / (records[0].sample_id + ".HE.bag"));
  if (records[0].bags.contains(0)) CHECK(code_of([&] { load_manifest(manifest); }) == ErrorCode::kData);
}

TEST_CASE("grouped splits") {
  SyntheticSpec spec = SyntheticSpec::reference();
  spec.n_individuals = 10;
  spec.segments_per_individual = 3;
  spec.feat_dim = 4;
  spec.patches_min = spec.patches_max = 2;
  const auto records = generate_synthetic(spec);
  std::map<std::string, std::string> owner;
  for (const auto& r : records) owner[r.sample_id] = r.individual_id;
  const auto plans = make_splits(records, 5);
  REQUIRE(plans.size() == 5);
  std::map<std::string, int> tested;
  for (const auto& plan : plans) {
    auto individuals = [&](const std::vector<std::string>& ids) {
      std::set<std::string> out;
      for (const auto& id : ids) out.insert(owner.at(id));
      return out;
    };
    const auto tr = individuals(plan.train), va = individuals(plan.val), te = individuals(plan.test);
    CHECK(tr.size() == 6);
    CHECK(va.size() == 2);
    CHECK(te.size() == 2);
    for (const auto& i : te) {
      CHECK_FALSE(tr.contains(i));
      CHECK_FALSE(va.contains(i));
      ++tested[i];
    }
    for (const auto& i : va) CHECK_FALSE(tr.contains(i));
    CHECK(plan.train.size() + plan.val.size() + plan.test.size() == records.size());
  }
  CHECK(tested.size() == 10);
  for (const auto& [id, n] : tested) CHECK(n == 1);

  const auto again = parse_splits(format_splits(plans));
  REQUIRE(again.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(again[k].train == plans[k].train);
    CHECK(again[k].test == plans[k].test);
  }
  CHECK(format_splits(make_splits(records, 5)) == format_splits(plans));
  CHECK(format_splits(make_splits(records, 6)) != format_splits(plans));

  spec.n_individuals = 4;
  CHECK(code_of([&] { make_splits(generate_synthetic(spec), 1); }) == ErrorCode::kData);
}

TEST_CASE("synthetic generation is reproducible") {
  SyntheticSpec spec = SyntheticSpec::reference();
  spec.n_individuals = 5;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].bags.size() == 4);
    for (const auto& [m, bag] : a[i].bags) CHECK(encode_bag(bag) == encode_bag(b[i].bags.at(m)));
  }
  spec.seed = 2;
  CHECK(encode_bag(generate_synthetic(spec)[0].bags.at(0)) != encode_bag(a[0].bags.at(0)));
}

TEST_CASE("missing bags never remove every modality") {
  SyntheticSpec spec = SyntheticSpec::reference();
  spec.n_individuals = 20;
  spec.feat_dim = 4;
  spec.missing_bag_p = 0.95;
  for (const auto& s : generate_synthetic(spec)) CHECK(s.bags.size() >= 1);
}

TEST_CASE("synthetic spec text round trip and validation") {
  const SyntheticSpec ref = SyntheticSpec::reference();
  const SyntheticSpec back = SyntheticSpec::from_kv(KeyValues::parse(ref.to_text()));
  CHECK(back.to_text() == ref.to_text());
  CHECK(code_of([] { SyntheticSpec::from_kv(KeyValues::parse("bogus=1\n")); }) == ErrorCode::kConfig);
  SyntheticSpec bad = ref;
  bad.class_signal[3].clear();
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfig);
}

TEST_CASE("reference task is linearly learnable; zero strength is chance") {
  const SyntheticSpec spec = SyntheticSpec::reference();
  const auto records = generate_synthetic(spec);
  const auto plans = make_splits(records, 7);
  double mean_acc = 0.0;
  for (const auto& plan : plans) {
    mean_acc += linear_probe_accuracy(select_samples(records, plan.train), select_samples(records, plan.test),
                                      spec.n_modalities, spec.feat_dim) / 5.0;
  }
  MESSAGE("linear probe accuracy " << mean_acc);
  CHECK(mean_acc >= 0.9);

  SyntheticSpec flat = spec;
  flat.signal_strength = 0.0;
  const auto noise = generate_synthetic(flat);
  double chance = 0.0;
  std::size_t n_test = 0;
  for (const auto& plan : plans) {
    chance += linear_probe_accuracy(select_samples(noise, plan.train), select_samples(noise, plan.test),
                                    flat.n_modalities, flat.feat_dim) * static_cast<double>(plan.test.size());
    n_test += plan.test.size();
  }
  chance /= static_cast<double>(n_test);
  MESSAGE("zero-signal accuracy " << chance);
  // Binomial 3-sigma band around 0.2.
  CHECK(std::abs(chance - 0.2) < 3.0 * std::sqrt(0.2 * 0.8 / static_cast<double>(n_test)));
}
