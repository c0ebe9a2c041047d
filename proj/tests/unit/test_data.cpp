// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "fedprune/backdoor.hpp"
#include "fedprune/error.hpp"
#include "fedprune/io.hpp"
#include "fedprune/loaders.hpp"
#include "fedprune/normalize.hpp"
#include "fedprune/partition.hpp"
#include "helpers.hpp"

using namespace fedprune;
using namespace fedprune::data;

TEST_CASE("IDX encode and decode round trip") {
  const auto ds = testutil::random_dataset(25, 1);
  const auto images = encode_idx_images(ds);
  const auto labels = encode_idx_labels(ds);
  CHECK(images.size() == 16 + 25 * 784);
  CHECK(labels.size() == 8 + 25);
  CHECK(images[2] == 0x08);
  CHECK(images[3] == 0x03);
  CHECK(labels[3] == 0x01);
  CHECK(decode_idx(images, labels) == ds);
}

TEST_CASE("IDX decode errors") {
  const auto ds = testutil::random_dataset(5, 2);
  auto images = encode_idx_images(ds);
  auto labels = encode_idx_labels(ds);

  SUBCASE("magic") {
    auto bad = images;
    bad[3] = 0x07;
    CHECK_THROWS_AS(decode_idx(bad, labels), MagicError);
  }
  SUBCASE("truncated payload") {
    std::vector<std::uint8_t> cut(images.begin(), images.end() - 10);
    try {
      decode_idx(cut, labels);
      FAIL("expected TruncationError");
    } catch (const TruncationError& e) {
      CHECK(e.expected() == images.size());
      CHECK(e.actual() == cut.size());
    }
  }
  SUBCASE("count mismatch") {
    auto bad = labels;
    bad[7] = 4;
    bad.pop_back();
    try {
      decode_idx(images, bad);
      FAIL("expected CountMismatchError");
    } catch (const CountMismatchError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("label out of range") {
    auto bad = labels;
    bad[8] = 10;
    CHECK_THROWS_AS(decode_idx(images, bad), DecodeError);
  }
}

TEST_CASE("CIFAR-10 records") {
  std::vector<std::uint8_t> bytes(2 * kCifarRecord);
  bytes[0] = 3;
  bytes[1] = 200;                     // R(0,0)
  bytes[1 + 1024] = 100;              // G(0,0)
  bytes[1 + 2048 + 33] = 50;          // B(1,1)
  bytes[kCifarRecord] = 7;
  const auto ds = decode_cifar10(bytes);
  REQUIRE(ds.size() == 2);
  CHECK(ds.channels() == 3);
  CHECK(ds.label(0) == 3);
  CHECK(ds.label(1) == 7);
  const auto img = ds.at(0);
  CHECK(img.at(0, 0, 0) == 200);
  CHECK(img.at(0, 0, 1) == 100);
  CHECK(img.at(1, 1, 2) == 50);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_cifar10(bytes), DecodeError);

  const auto dir = testutil::scratch_dir("cifar");
  bytes.push_back(0);
  io::write_file_atomic(dir / "a.bin", std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  io::write_file_atomic(dir / "b.bin", std::string_view(reinterpret_cast<const char*>(bytes.data()), kCifarRecord));
  const std::filesystem::path files[] = {dir / "a.bin", dir / "b.bin"};
  const auto both = load_cifar10(files);
  CHECK(both.size() == 3);
  CHECK(both.label(2) == 3);
}

TEST_CASE("bundled MNIST files decode with consistent counts") {
  if (!testutil::have_mnist()) {
    MESSAGE("MNIST not present, skipping");
    return;
  }
  const auto train = load_idx(testutil::data_dir() / "mnist" / "train-images-idx3-ubyte",
                              testutil::data_dir() / "mnist" / "train-labels-idx1-ubyte");
  const auto test = load_idx(testutil::data_dir() / "mnist" / "t10k-images-idx3-ubyte",
                             testutil::data_dir() / "mnist" / "t10k-labels-idx1-ubyte");
  const auto dir = testutil::data_dir() / "mnist";
  CHECK(train.size() == (std::filesystem::file_size(dir / "train-images-idx3-ubyte") - 16) / 784);
  CHECK(train.size() == std::filesystem::file_size(dir / "train-labels-idx1-ubyte") - 8);
  CHECK(test.size() == (std::filesystem::file_size(dir / "t10k-images-idx3-ubyte") - 16) / 784);
  CHECK(train.size() > 0);
  CHECK(test.size() > 0);
  CHECK(train.height() == 28);
  const auto stats = compute_norm_stats(train);
  CHECK(stats.mean[0] == doctest::Approx(0.1307).epsilon(1e-3));
  CHECK(stats.stddev[0] == doctest::Approx(0.3081).epsilon(1e-3));
}

TEST_CASE("normalization statistics and split") {
  Dataset ds(1, 1, 2);
  ds.push_back(std::vector<std::uint8_t>{0, 255}, 0);
  ds.push_back(std::vector<std::uint8_t>{255, 255}, 1);
  const auto s = compute_norm_stats(ds);
  CHECK(s.mean[0] == doctest::Approx(0.75));
  CHECK(s.stddev[0] == doctest::Approx(std::sqrt(0.1875)));
  const auto x = normalize(ds, s);
  CHECK(x[0] == doctest::Approx(-0.75 / std::sqrt(0.1875)));

  Dataset flat(1, 1, 2);
  flat.push_back(std::vector<std::uint8_t>{7, 7}, 0);
  CHECK_THROWS_AS(compute_norm_stats(flat), DegenerateError);

  const auto test = testutil::random_dataset(100, 3);
  const auto split = split_validation(test, 0.1);
  CHECK(split.test.size() == 90);
  CHECK(split.validation.size() == 10);
  CHECK(split.validation.at(0) == test.at(90));
  CHECK(split.test.at(89) == test.at(89));
}

TEST_CASE("label assignment gives each client K distinct labels and balanced coverage") {
  for (int n : {5, 10, 20})
    for (int k : {1, 2, 3, 5, 10}) {
      if (n * k < 10) continue;
      const auto sets = assign_labels(n, k, 9);
      REQUIRE(sets.size() == static_cast<std::size_t>(n));
      std::map<int, int> holders;
      for (const auto& s : sets) {
        CHECK(s.size() == static_cast<std::size_t>(k));
        CHECK(std::set<int>(s.begin(), s.end()).size() == s.size());
        for (int l : s) ++holders[l];
      }
      CHECK(holders.size() == 10);
      for (const auto& [label, count] : holders) {
        CHECK(count >= n * k / 10);
        CHECK(count <= (n * k + 9) / 10);
      }
    }
  CHECK_THROWS_AS(assign_labels(3, 3, 1), ConfigError);
  CHECK_THROWS_AS(assign_labels(10, 0, 1), ConfigError);
  CHECK_THROWS_AS(assign_labels(10, 11, 1), ConfigError);
}

TEST_CASE("K-label partition covers every image exactly once") {
  const auto ds = testutil::random_dataset(1000, 4);
  const auto shards = partition_k_label(ds, 10, 3, 21);
  REQUIRE(shards.size() == 10);
  std::vector<int> seen(ds.size(), 0);
  for (const auto& sh : shards) {
    CHECK(std::is_sorted(sh.source_index.begin(), sh.source_index.end()));
    std::set<int> labels;
    for (std::size_t i = 0; i < sh.n(); ++i) {
      labels.insert(sh.data.label(i));
      CHECK(sh.data.at(i) == ds.at(sh.source_index[i]));
      ++seen[sh.source_index[i]];
    }
    CHECK(labels.size() <= 3);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));

  const auto again = partition_k_label(ds, 10, 3, 21);
  for (std::size_t i = 0; i < shards.size(); ++i) CHECK(again[i].source_index == shards[i].source_index);

  const auto iid = partition_k_label(ds, 10, 10, 21);
  for (const auto& sh : iid) CHECK(sh.n() == 100);
}

TEST_CASE("corner pattern geometry") {
  const auto one = corner_pattern(1, 1, 28);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == TriggerPixel{1, 26, 0, 255});
  for (int p = 1; p <= 9; ++p) {
    const auto t = corner_pattern(p, 3, 28);
    CHECK(t.size() == static_cast<std::size_t>(3 * p));
    std::set<std::pair<int, int>> pos;
    for (const auto& px : t) {
      CHECK(px.row >= 0);
      CHECK(px.row < 4);
      CHECK(px.col >= 24);
      CHECK(px.col < 28);
      CHECK(px.value == 255);
      pos.insert({px.row, px.col});
    }
    CHECK(pos.size() == static_cast<std::size_t>(p));
    // Prefix property: a smaller pattern is contained in a larger one.
    if (p > 1) {
      const auto prev = corner_pattern(p - 1, 3, 28);
      for (const auto& px : prev) CHECK(std::find(t.begin(), t.end(), px) != t.end());
    }
  }
  CHECK_THROWS(corner_pattern(0, 1, 28));
  CHECK_THROWS(corner_pattern(10, 1, 28));
}

TEST_CASE("stamping changes exactly the trigger pixels and keeps the label") {
  const auto ds = testutil::random_dataset(20, 5);
  for (int p : {1, 3, 5, 9}) {
    const auto spec = make_backdoor_spec(corner_pattern(p, 1, 28), 9, 1, 3.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto img = ds.at(i);
      for (const auto& px : spec.trigger) img.at(px.row, px.col, px.channel) = 0;  // force visible changes
      const auto out = apply_backdoor(img, spec);
      CHECK(out.label == img.label);
      int diff = 0;
      for (std::size_t k = 0; k < img.pixels.size(); ++k) diff += img.pixels[k] != out.pixels[k];
      CHECK(diff == p);
    }
  }
  const auto empty = make_backdoor_spec({}, 9, 1, 1.0);
  CHECK(apply_backdoor(ds.at(0), empty) == ds.at(0));
  auto off = make_backdoor_spec({TriggerPixel{28, 0, 0, 255}}, 9, 1, 1.0);
  CHECK_THROWS_AS(off.check_bounds(1, 28, 28), ArgumentError);
}

TEST_CASE("backdoor spec validation") {
  CHECK_THROWS_AS(make_backdoor_spec(corner_pattern(1, 1, 28), 3, 3, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(make_backdoor_spec(corner_pattern(1, 1, 28), 9, 1, 0.5).validate(), ConfigError);
  CHECK_THROWS_AS(make_backdoor_spec(corner_pattern(1, 1, 28), 9, 1, 2.0, 1.5).validate(), ConfigError);
  CHECK_NOTHROW(make_backdoor_spec(corner_pattern(1, 1, 28), 9, 1, 2.0).validate());
}

TEST_CASE("backdoor test set holds every victim image relabelled") {
  const auto test = testutil::random_dataset(100, 6);
  const auto spec = make_backdoor_spec(corner_pattern(3, 1, 28), 9, 1, 3.0);
  const auto bd = build_backdoor_testset(test, spec);
  CHECK(bd.size() == 10);
  std::size_t j = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.label(i) != 9) continue;
    auto expected = apply_backdoor(test.at(i), spec);
    expected.label = 1;
    CHECK(bd.at(j++) == expected);
  }
  const auto no_nines = testutil::random_dataset(9, 7);
  CHECK_THROWS_AS(build_backdoor_testset(no_nines, spec), ArgumentError);
}

TEST_CASE("DBA decomposition is a disjoint cover") {
  const auto global = make_backdoor_spec(strip_pattern(3), 2, 0, 4.0);
  CHECK(global.trigger.size() == 16 * 3);
  const auto parts = decompose_dba(global, 4);
  REQUIRE(parts.size() == 4);
  std::multiset<TriggerPixel> all;
  for (const auto& part : parts) {
    CHECK(part.vic_label == 2);
    CHECK(part.atk_label == 0);
    CHECK(part.alpha == 4.0);
    std::set<int> rows;
    std::set<int> cols;
    for (const auto& px : part.trigger) {
      all.insert(px);
      rows.insert(px.row);
      cols.insert(px.col / 6);
    }
    // Each part is one 1x4 strip on every channel.
    CHECK(part.trigger.size() == 12);
    CHECK(rows.size() == 1);
    CHECK(cols.size() == 1);
  }
  CHECK(all == std::multiset<TriggerPixel>(global.trigger.begin(), global.trigger.end()));
  CHECK(decompose_dba(global, 1)[0].trigger.size() == global.trigger.size());
  CHECK_THROWS_AS(decompose_dba(make_backdoor_spec(corner_pattern(3, 1, 28), 9, 1, 1.0), 4), ArgumentError);
}

TEST_CASE("poisoned copies") {
  const auto ds = testutil::random_dataset(40, 8);  // four images per label
  auto spec = make_backdoor_spec(corner_pattern(1, 1, 28), 9, 1, 1.0, 0.5);
  const auto copies = poisoned_copies(ds, spec);
  CHECK(copies.size() == 40);
  for (std::size_t i = 0; i < copies.size(); ++i) {
    CHECK(copies.label(i) == 1);
    CHECK(copies.at(i).at(1, 26) == 255);
  }
  spec.poison_fraction = 1.0;
  CHECK(poisoned_copies(ds, spec).size() == 4);
  spec.poison_fraction = 0.0;
  CHECK(poisoned_copies(ds, spec).empty());

  Dataset no_victims(1, 28, 28);
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.label(i) != 9) no_victims.push_back(ds.at(i));
  spec.poison_fraction = 1.0;
  CHECK(poisoned_copies(no_victims, spec).size() == no_victims.size());
}
