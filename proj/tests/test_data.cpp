#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dmt/data.hpp"
#include "dmt/nn.hpp"

using namespace dmt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen_toy_binary: determinism, balance and separability") {
  const TabularDataset a = gen_toy_binary(200, 0.3, 0.05, 11);
  const TabularDataset b = gen_toy_binary(200, 0.3, 0.05, 11);
  CHECK(a.features() == b.features());

  const TabularDataset c = gen_toy_binary(201, 0.3, 0.05, 12);
  std::int64_t first = 0;
  for (std::int64_t i = 0; i < c.row_count(); ++i) {
    if (c.sealed_label_of(i) == 0) ++first;
  }
  CHECK(std::abs(first - (201 - first)) <= 1);

  CHECK_THROWS_AS(gen_toy_binary(3, 0.0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(gen_toy_binary(100, 0.0, -0.1, 1), ConfigError);

  // noiseless, widely separated arcs: one linear layer fits them perfectly
  TabularDataset easy = gen_toy_binary(120, 1.0, 0.0, 13);
  SplitSpec spec;
  spec.labeled_ratio = 1.0;
  spec.valtiny_size = 0;
  spec.test_fraction = 0.0;
  split_dataset(easy, spec, 5);
  const auto rows = easy.rows_of(Split::Labeled);
  REQUIRE(rows.size() == 120);
  Matrix inputs = easy.gather(rows);
  std::vector<int> labels;
  for (std::int64_t row : rows) labels.push_back(easy.label_of(row));

  Model linear = init_model(3, {2, 2});
  SgdState state = make_sgd_state(linear);
  const std::vector<double> ones(rows.size(), 1.0);
  for (int epoch = 0; epoch < 400; ++epoch) {
    const GradientSet grads = backward(linear, inputs, ones, labels);
    sgd_step(linear, grads, 0.5, 0.9, 0.0, state);
  }
  const Matrix logits = forward(linear, inputs);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (argmax_class(logits.row(static_cast<Eigen::Index>(i)).transpose()) == labels[i]) {
      ++correct;
    }
  }
  CHECK(correct == static_cast<std::int64_t>(rows.size()));
}

TEST_CASE("split_dataset: counts, stratification and the oracle setting") {
  TabularDataset data = gen_toy_binary(1000, 0.3, 0.1, 21);
  SplitSpec spec;
  spec.labeled_ratio = 0.125;
  spec.valtiny_size = 50;
  spec.test_fraction = 0.2;
  split_dataset(data, spec, 9);

  const auto labeled = data.rows_of(Split::Labeled);
  const auto unlabeled = data.rows_of(Split::Unlabeled);
  const auto valtiny = data.rows_of(Split::Valtiny);
  const auto test = data.rows_of(Split::Test);
  CHECK(test.size() == 200);
  CHECK(valtiny.size() == 50);
  CHECK(labeled.size() == 100);  // ceil(0.125 * 800)
  CHECK(labeled.size() + unlabeled.size() + valtiny.size() + test.size() == 1000);

  // stratified: per-class labeled counts within one of proportional
  std::int64_t class0 = 0;
  std::int64_t pool0 = 0;
  std::int64_t pool = 0;
  for (std::int64_t row : labeled) {
    if (data.label_of(row) == 0) ++class0;
  }
  for (Split s : {Split::Labeled, Split::Unlabeled}) {
    for (std::int64_t row : data.rows_of(s)) {
      ++pool;
      if (data.sealed_label_of(row) == 0) ++pool0;
    }
  }
  const double proportional =
      static_cast<double>(labeled.size()) * static_cast<double>(pool0) / static_cast<double>(pool);
  CHECK(std::abs(static_cast<double>(class0) - proportional) <= 1.0);

  // oracle setting: everything trainable is labeled
  TabularDataset oracle = gen_toy_binary(100, 0.3, 0.1, 22);
  SplitSpec full;
  full.labeled_ratio = 1.0;
  full.valtiny_size = 10;
  full.test_fraction = 0.2;
  split_dataset(oracle, full, 3);
  CHECK(oracle.rows_of(Split::Unlabeled).empty());

  SplitSpec bad;
  bad.valtiny_size = 1000;
  CHECK_THROWS_AS(split_dataset(data, bad, 1), ConfigError);
  SplitSpec bad_ratio;
  bad_ratio.labeled_ratio = 0.0;
  CHECK_THROWS_AS(split_dataset(data, bad_ratio, 1), ConfigError);
}

TEST_CASE("sealed ground truth: the training accessor refuses unlabeled rows") {
  TabularDataset data = gen_toy_binary(50, 0.3, 0.1, 30);
  SplitSpec spec;
  spec.labeled_ratio = 0.2;
  spec.valtiny_size = 5;
  spec.test_fraction = 0.2;
  split_dataset(data, spec, 4);
  const auto unlabeled = data.rows_of(Split::Unlabeled);
  REQUIRE(!unlabeled.empty());
  CHECK_THROWS_AS(data.label_of(unlabeled.front()), SealedLabelError);
  CHECK(data.sealed_label_of(unlabeled.front()) >= 0);
  const auto labeled = data.rows_of(Split::Labeled);
  CHECK_NOTHROW(data.label_of(labeled.front()));
}

TEST_CASE("tabular CSV round-trips exactly and re-saves byte-identically") {
  TabularDataset data = gen_toy_binary(64, 0.4, 0.15, 41);
  SplitSpec spec;
  spec.labeled_ratio = 0.25;
  spec.valtiny_size = 6;
  spec.test_fraction = 0.25;
  split_dataset(data, spec, 2);

  const std::string path = temp_path("dmt_tab_rt.csv");
  save_csv(data, path);
  const TabularDataset back = load_csv(path);
  CHECK(back.row_count() == data.row_count());
  CHECK(back.class_count() == data.class_count());
  CHECK(back.features() == data.features());
  for (std::int64_t i = 0; i < data.row_count(); ++i) {
    CHECK(back.split_of(i) == data.split_of(i));
    CHECK(back.sealed_label_of(i) == data.sealed_label_of(i));
  }
  const std::string again = temp_path("dmt_tab_rt2.csv");
  save_csv(back, again);
  CHECK(read_all(path) == read_all(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("tabular CSV parse errors carry line numbers") {
  const std::string path = temp_path("dmt_tab_bad.csv");
  {
    std::ofstream out(path);
    out << "f0,f1,label,split\n";
    out << "0.5,oops,1,labeled\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 2"), ParseError);
  {
    std::ofstream out(path);
    out << "f0,f1,label,split\n";
    out << "0.5,0.25,-,labeled\n";  // labeled row without a label
  }
  CHECK_THROWS_AS(load_csv(path), ParseError);
  {
    std::ofstream out(path);
    out << "f0,f1,label,split\n";
    out << "0.5,0.25,1,nowhere\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("nowhere"), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("gen_grid_seg: balance, degenerate background, determinism") {
  const GridDataset balanced = gen_grid_seg(50, 12, 12, 4, 1.0, 7);
  std::vector<std::int64_t> counts(4, 0);
  for (std::int64_t img = 0; img < balanced.image_count(); ++img) {
    const auto& labels = balanced.sealed_label_map(img);
    for (int r = 0; r < balanced.height(); ++r) {
      for (int c = 0; c < balanced.width(); ++c) {
        ++counts[static_cast<std::size_t>(labels(r, c))];
      }
    }
  }
  const auto lo = *std::min_element(counts.begin(), counts.end());
  const auto hi = *std::max_element(counts.begin(), counts.end());
  CHECK(static_cast<double>(hi - lo) <= 0.1 * static_cast<double>(hi));

  const GridDataset flat = gen_grid_seg(3, 8, 8, 2, 0.0, 7);
  for (std::int64_t img = 0; img < flat.image_count(); ++img) {
    CHECK(flat.sealed_label_map(img).maxCoeff() == 0);
  }

  const GridDataset a = gen_grid_seg(4, 8, 8, 3, 0.7, 99);
  const GridDataset b = gen_grid_seg(4, 8, 8, 3, 0.7, 99);
  for (std::int64_t img = 0; img < 4; ++img) {
    CHECK(a.image_channels(img)[0] == b.image_channels(img)[0]);
    CHECK(a.sealed_label_map(img) == b.sealed_label_map(img));
  }

  CHECK_THROWS_AS(gen_grid_seg(2, 3, 8, 2, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(gen_grid_seg(2, 8, 8, 1, 1.0, 1), ConfigError);
}

TEST_CASE("grid window features have the documented dimension and padding") {
  const GridDataset grid = gen_grid_seg(2, 8, 8, 3, 1.0, 5);
  const int side = 2 * grid.window_radius() + 1;
  CHECK(grid.pixel_feature_dim() == grid.channel_count() * side * side);
  const Matrix features = grid.window_features(0);
  CHECK(features.rows() == 64);
  CHECK(features.cols() == grid.pixel_feature_dim());
  // the corner pixel's top-left window entry is zero padding
  CHECK(features(0, 0) == 0.0);
  // the window center of pixel (0,0) for channel 0 equals the raw pixel
  const int center = (side * side) / 2;
  CHECK(features(0, center) == grid.image_channels(0)[0](0, 0));
}

TEST_CASE("split_grid tags images and the label accessor seals unlabeled ones") {
  GridDataset grid = gen_grid_seg(24, 8, 8, 3, 1.0, 77);
  GridSplitSpec spec;
  spec.labeled_ratio = 0.125;
  spec.valtiny_images = 2;
  spec.test_fraction = 0.2;
  split_grid(grid, spec, 5);
  CHECK(grid.images_of(Split::Test).size() == 5);
  CHECK(grid.images_of(Split::Valtiny).size() == 2);
  CHECK(grid.images_of(Split::Labeled).size() == 3);  // ceil(19/8)
  CHECK(grid.images_of(Split::Unlabeled).size() == 14);

  const auto unlabeled = grid.images_of(Split::Unlabeled);
  CHECK_THROWS_AS(grid.label_map(unlabeled.front()), SealedLabelError);
  CHECK_NOTHROW(grid.sealed_label_map(unlabeled.front()));
  CHECK_NOTHROW(grid.label_map(grid.images_of(Split::Labeled).front()));
}

TEST_CASE("grid CSV round-trips exactly") {
  GridDataset grid = gen_grid_seg(3, 6, 6, 3, 0.8, 13);
  GridSplitSpec spec;
  spec.labeled_ratio = 0.5;
  spec.valtiny_images = 1;
  spec.test_fraction = 0.0;
  split_grid(grid, spec, 3);

  const std::string path = temp_path("dmt_grid_rt.csv");
  save_grid_csv(grid, path);
  const GridDataset back = load_grid_csv(path);
  CHECK(back.image_count() == grid.image_count());
  CHECK(back.height() == grid.height());
  CHECK(back.width() == grid.width());
  CHECK(back.channel_count() == grid.channel_count());
  CHECK(back.class_count() == grid.class_count());
  for (std::int64_t img = 0; img < grid.image_count(); ++img) {
    CHECK(back.split_of(img) == grid.split_of(img));
    CHECK(back.sealed_label_map(img) == grid.sealed_label_map(img));
    for (int ch = 0; ch < grid.channel_count(); ++ch) {
      CHECK(back.image_channels(img)[static_cast<std::size_t>(ch)] ==
            grid.image_channels(img)[static_cast<std::size_t>(ch)]);
    }
  }
  const std::string again = temp_path("dmt_grid_rt2.csv");
  save_grid_csv(back, again);
  CHECK(read_all(path) == read_all(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("jitter: sigma zero is the identity, otherwise deterministic in seed") {
  Matrix rows = Matrix::Random(4, 3);
  Rng rng(5);
  CHECK(jitter_features(rows, 0.0, rng) == rows);
  Rng r1(6), r2(6);
  CHECK(jitter_features(rows, 0.3, r1) == jitter_features(rows, 0.3, r2));
  Rng r3(7);
  CHECK_THROWS_AS(jitter_features(rows, -0.5, r3), ConfigError);
}

TEST_CASE("flips keep image, label map and weight map aligned") {
  GridSample sample;
  sample.channels = {Matrix::Zero(4, 5)};
  sample.label_map.setZero(4, 5);
  sample.weight_map = Matrix::Zero(4, 5);
  // mark one off-center pixel in all three planes
  sample.channels[0](1, 1) = 7.0;
  sample.label_map(1, 1) = 2;
  sample.weight_map(1, 1) = 0.25;

  GridSample flipped = sample;
  hflip_sample(flipped);
  CHECK(flipped.channels[0](1, 3) == 7.0);
  CHECK(flipped.label_map(1, 3) == 2);
  CHECK(flipped.weight_map(1, 3) == 0.25);
  CHECK(flipped.channels[0](1, 1) == 0.0);

  // involution
  hflip_sample(flipped);
  CHECK(flipped.channels[0] == sample.channels[0]);
  CHECK(flipped.label_map == sample.label_map);
  CHECK(flipped.weight_map == sample.weight_map);
}

TEST_CASE("crop keeps the planes congruent and validates bounds") {
  GridSample sample;
  sample.channels = {Matrix::Random(6, 6)};
  sample.label_map.setZero(6, 6);
  sample.label_map(3, 4) = 1;
  sample.weight_map = Matrix::Zero(6, 6);
  sample.weight_map(3, 4) = 0.5;

  const GridSample cropped = crop_sample(sample, 2, 3, 3, 3);
  CHECK(cropped.channels[0].rows() == 3);
  CHECK(cropped.channels[0].cols() == 3);
  CHECK(cropped.label_map(1, 1) == 1);
  CHECK(cropped.weight_map(1, 1) == 0.5);
  CHECK(cropped.channels[0](0, 0) == sample.channels[0](2, 3));

  CHECK_THROWS_AS(crop_sample(sample, 5, 5, 3, 3), ConfigError);
  CHECK_THROWS_AS(crop_sample(sample, 0, 0, 7, 3), ConfigError);
}

TEST_CASE("augment_sample: identity spec and flip-crop composition stay aligned") {
  GridSample sample;
  sample.channels = {Matrix::Random(8, 8), Matrix::Random(8, 8)};
  sample.label_map = Eigen::MatrixXi::Zero(8, 8);
  sample.weight_map = Matrix::Zero(8, 8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      sample.label_map(r, c) = (r * 8 + c) % 3;
      sample.weight_map(r, c) = 0.01 * (r * 8 + c);
    }
  }

  AugmentSpec identity;
  Rng rng(3);
  const GridSample unchanged = augment_sample(sample, identity, rng);
  CHECK(unchanged.channels[0] == sample.channels[0]);
  CHECK(unchanged.label_map == sample.label_map);

  AugmentSpec spec;
  spec.flip_probability = 1.0;
  spec.crop_height = 5;
  spec.crop_width = 4;
  for (int trial = 0; trial < 20; ++trial) {
    Rng trial_rng(100 + trial);
    const GridSample out = augment_sample(sample, spec, trial_rng);
    REQUIRE(out.channels[0].rows() == 5);
    REQUIRE(out.channels[0].cols() == 4);
    // label/weight stay tied to the same source pixel as channel values:
    // recover the source position from the unique weight value
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 4; ++c) {
        const int code = static_cast<int>(std::llround(out.weight_map(r, c) / 0.01));
        CHECK(out.label_map(r, c) == code % 3);
      }
    }
  }
}
