#include "dmt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dmt {

std::string split_name(Split split) {
  switch (split) {
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Valtiny: return "valtiny";
    case Split::Test: return "test";
  }
  throw ConfigError("split_name: bad split");
}

Split parse_split(const std::string& name) {
  if (name == "labeled") return Split::Labeled;
  if (name == "unlabeled") return Split::Unlabeled;
  if (name == "valtiny") return Split::Valtiny;
  if (name == "test") return Split::Test;
  throw ParseError("unknown split tag '" + name + "'");
}

TabularDataset::TabularDataset(Matrix features, std::vector<int> labels,
                               std::vector<Split> splits, int class_count)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      splits_(std::move(splits)),
      class_count_(class_count) {
  const auto n = static_cast<std::size_t>(features_.rows());
  if (labels_.size() != n || splits_.size() != n) {
    throw ShapeError("dataset: labels/splits must match row count");
  }
  if (class_count_ < 2) throw ConfigError("dataset: class count must be >= 2");
  if (!features_.allFinite()) throw NumericError("dataset: non-finite feature");
  for (std::size_t i = 0; i < n; ++i) {
    const bool needs_label = splits_[i] != Split::Unlabeled;
    if (needs_label && (labels_[i] < 0 || labels_[i] >= class_count_)) {
      throw ConfigError("dataset: row " + std::to_string(i) + " tagged " +
                        split_name(splits_[i]) + " but has no valid label");
    }
    if (labels_[i] >= class_count_) {
      throw ConfigError("dataset: label out of range at row " + std::to_string(i));
    }
  }
}

int TabularDataset::label_of(std::int64_t row) const {
  if (split_of(row) == Split::Unlabeled) {
    throw SealedLabelError("label_of: row " + std::to_string(row) +
                           " is unlabeled; its ground truth is sealed");
  }
  return labels_.at(static_cast<std::size_t>(row));
}

bool TabularDataset::has_sealed_label(std::int64_t row) const {
  return labels_.at(static_cast<std::size_t>(row)) >= 0;
}

int TabularDataset::sealed_label_of(std::int64_t row) const {
  const int label = labels_.at(static_cast<std::size_t>(row));
  if (label < 0) {
    throw EmptyInputError("sealed_label_of: row " + std::to_string(row) +
                          " carries no ground truth");
  }
  return label;
}

std::vector<std::int64_t> TabularDataset::rows_of(Split split) const {
  std::vector<std::int64_t> rows;
  for (std::size_t i = 0; i < splits_.size(); ++i) {
    if (splits_[i] == split) rows.push_back(static_cast<std::int64_t>(i));
  }
  return rows;
}

Matrix TabularDataset::gather(std::span<const std::int64_t> rows) const {
  Matrix out(static_cast<Eigen::Index>(rows.size()), features_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = features_.row(rows[i]);
  }
  return out;
}

void TabularDataset::set_split(std::int64_t row, Split split) {
  if (split != Split::Unlabeled && labels_.at(static_cast<std::size_t>(row)) < 0) {
    throw ConfigError("set_split: cannot tag a label-less row as " + split_name(split));
  }
  splits_.at(static_cast<std::size_t>(row)) = split;
}

TabularDataset gen_toy_binary(std::int64_t n, double class_separation, double noise_sigma,
                              std::uint64_t seed) {
  if (n < 4) throw ConfigError("gen_toy_binary: need n >= 4");
  if (noise_sigma < 0.0) throw ConfigError("gen_toy_binary: noise must be >= 0");

  Rng rng(seed);
  const std::int64_t n_first = (n + 1) / 2;
  Matrix features(n, 2);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const bool second = i >= n_first;
    const double angle = rng.uniform(0.0, std::numbers::pi);
    double x, y;
    if (!second) {
      x = std::cos(angle);
      y = std::sin(angle);
    } else {
      x = 1.0 - std::cos(angle);
      y = 0.5 - class_separation - std::sin(angle);
    }
    features(i, 0) = x + noise_sigma * rng.normal();
    features(i, 1) = y + noise_sigma * rng.normal();
    labels[static_cast<std::size_t>(i)] = second ? 1 : 0;
  }
  std::vector<Split> splits(static_cast<std::size_t>(n), Split::Unlabeled);
  return TabularDataset(std::move(features), std::move(labels), std::move(splits), 2);
}

namespace {

// Largest-remainder allocation of `total` across class sizes, capped at the
// class size; keeps every count within one of proportional.
std::vector<std::int64_t> proportional_allocation(const std::vector<std::int64_t>& class_sizes,
                                                  std::int64_t total) {
  const double pool = static_cast<double>(
      std::accumulate(class_sizes.begin(), class_sizes.end(), std::int64_t{0}));
  std::vector<std::int64_t> counts(class_sizes.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    if (class_sizes[c] == 0) continue;
    const double quota = static_cast<double>(total) * static_cast<double>(class_sizes[c]) / pool;
    counts[c] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(quota)),
                                       class_sizes[c]);
    assigned += counts[c];
    remainders.emplace_back(quota - std::floor(quota), c);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t r = 0;
  while (assigned < total && !remainders.empty()) {
    const std::size_t c = remainders[r % remainders.size()].second;
    if (counts[c] < class_sizes[c]) {
      ++counts[c];
      ++assigned;
    }
    ++r;
    if (r > remainders.size() * 4 && assigned < total) {
      throw ConfigError("stratified split: requested more rows than available");
    }
  }
  return counts;
}

}  // namespace

void split_dataset(TabularDataset& dataset, const SplitSpec& spec, std::uint64_t seed) {
  if (spec.labeled_ratio <= 0.0 || spec.labeled_ratio > 1.0) {
    throw ConfigError("split: labeled ratio must lie in (0,1]");
  }
  if (spec.test_fraction < 0.0 || spec.test_fraction >= 1.0) {
    throw ConfigError("split: test fraction must lie in [0,1)");
  }
  const std::int64_t n = dataset.row_count();
  for (std::int64_t i = 0; i < n; ++i) {
    if (!dataset.has_sealed_label(i)) {
      throw ConfigError("split: every row needs ground truth before splitting");
    }
  }

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_test = static_cast<std::int64_t>(
      std::llround(spec.test_fraction * static_cast<double>(n)));
  const std::int64_t n_train = n - n_test;
  if (spec.valtiny_size >= n_train) {
    throw ConfigError("split: valtiny size " + std::to_string(spec.valtiny_size) +
                      " leaves no training rows (train pool " + std::to_string(n_train) + ")");
  }
  const std::int64_t pool_size = n_train - spec.valtiny_size;
  const std::int64_t labeled_total = std::min<std::int64_t>(
      static_cast<std::int64_t>(
          std::ceil(spec.labeled_ratio * static_cast<double>(n_train))),
      pool_size);

  std::size_t cursor = 0;
  for (std::int64_t i = 0; i < n_test; ++i) dataset.set_split(order[cursor++], Split::Test);
  for (std::int64_t i = 0; i < spec.valtiny_size; ++i) {
    dataset.set_split(order[cursor++], Split::Valtiny);
  }
  std::vector<std::int64_t> pool(order.begin() + static_cast<std::ptrdiff_t>(cursor), order.end());

  if (spec.stratify) {
    std::vector<std::int64_t> class_sizes(static_cast<std::size_t>(dataset.class_count()), 0);
    for (std::int64_t row : pool) {
      ++class_sizes[static_cast<std::size_t>(dataset.sealed_label_of(row))];
    }
    auto budget = proportional_allocation(class_sizes, labeled_total);
    for (std::int64_t row : pool) {
      auto& left = budget[static_cast<std::size_t>(dataset.sealed_label_of(row))];
      if (left > 0) {
        dataset.set_split(row, Split::Labeled);
        --left;
      } else {
        dataset.set_split(row, Split::Unlabeled);
      }
    }
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      dataset.set_split(pool[i], static_cast<std::int64_t>(i) < labeled_total
                                     ? Split::Labeled
                                     : Split::Unlabeled);
    }
  }
}

namespace {

std::string format_number(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& token, std::size_t line_no) {
  double value = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + token + "'");
  }
  return value;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

TabularDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = split_fields(line);
  if (header.size() < 3 || header[header.size() - 2] != "label" ||
      header.back() != "split") {
    throw ParseError(path + ": expected header f0,...,label,split");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j] != "f" + std::to_string(j)) {
      throw ParseError(path + ": unexpected feature column '" + header[j] + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<Split> splits;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::vector<double> row(dim);
    for (std::size_t j = 0; j < dim; ++j) row[j] = parse_number(fields[j], line_no);
    const Split split = [&] {
      try {
        return parse_split(fields.back());
      } catch (const ParseError&) {
        throw ParseError("line " + std::to_string(line_no) + ": unknown split tag '" +
                         fields.back() + "'");
      }
    }();
    int label = -1;
    if (fields[dim] == "-") {
      if (split != Split::Unlabeled) {
        throw ParseError("line " + std::to_string(line_no) + ": " + split_name(split) +
                         " row is missing its label");
      }
    } else {
      label = static_cast<int>(parse_number(fields[dim], line_no));
      if (label < 0) throw ParseError("line " + std::to_string(line_no) + ": negative label");
      max_label = std::max(max_label, label);
    }
    rows.push_back(std::move(row));
    labels.push_back(label);
    splits.push_back(split);
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  Matrix features(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return TabularDataset(std::move(features), std::move(labels), std::move(splits),
                        std::max(max_label + 1, 2));
}

void save_csv(const TabularDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (int j = 0; j < dataset.feature_dim(); ++j) {
    out << 'f' << j << ',';
  }
  out << "label,split\n";
  for (std::int64_t i = 0; i < dataset.row_count(); ++i) {
    for (int j = 0; j < dataset.feature_dim(); ++j) {
      out << format_number(dataset.features()(i, j)) << ',';
    }
    if (dataset.has_sealed_label(i)) {
      out << dataset.sealed_label_of(i);
    } else {
      out << '-';
    }
    out << ',' << split_name(dataset.split_of(i)) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

GridDataset::GridDataset(std::vector<std::vector<Matrix>> channels,
                         std::vector<Eigen::MatrixXi> labels, std::vector<Split> splits,
                         int class_count, int window_radius)
    : channels_(std::move(channels)),
      labels_(std::move(labels)),
      splits_(std::move(splits)),
      class_count_(class_count),
      window_radius_(window_radius) {
  if (channels_.empty()) throw ConfigError("grid: no images");
  if (labels_.size() != channels_.size() || splits_.size() != channels_.size()) {
    throw ShapeError("grid: labels/splits must match image count");
  }
  if (class_count_ < 2) throw ConfigError("grid: class count must be >= 2");
  if (window_radius_ < 0) throw ConfigError("grid: window radius must be >= 0");
  channel_count_ = static_cast<int>(channels_.front().size());
  if (channel_count_ < 1) throw ConfigError("grid: images need at least one channel");
  height_ = static_cast<int>(channels_.front().front().rows());
  width_ = static_cast<int>(channels_.front().front().cols());
  if (height_ < 4 || width_ < 4) throw ConfigError("grid: H and W must be >= 4");
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (static_cast<int>(channels_[i].size()) != channel_count_) {
      throw ShapeError("grid: inconsistent channel count at image " + std::to_string(i));
    }
    for (const Matrix& ch : channels_[i]) {
      if (ch.rows() != height_ || ch.cols() != width_) {
        throw ShapeError("grid: inconsistent image size at image " + std::to_string(i));
      }
      if (!ch.allFinite()) throw NumericError("grid: non-finite pixel value");
    }
    if (labels_[i].rows() != height_ || labels_[i].cols() != width_) {
      throw ShapeError("grid: label map size mismatch at image " + std::to_string(i));
    }
    if (labels_[i].minCoeff() < 0 || labels_[i].maxCoeff() >= class_count_) {
      throw ConfigError("grid: label out of range at image " + std::to_string(i));
    }
  }
}

int GridDataset::pixel_feature_dim() const {
  const int side = 2 * window_radius_ + 1;
  return channel_count_ * side * side;
}

void GridDataset::set_split(std::int64_t image, Split split) {
  splits_.at(static_cast<std::size_t>(image)) = split;
}

std::vector<std::int64_t> GridDataset::images_of(Split split) const {
  std::vector<std::int64_t> images;
  for (std::size_t i = 0; i < splits_.size(); ++i) {
    if (splits_[i] == split) images.push_back(static_cast<std::int64_t>(i));
  }
  return images;
}

const std::vector<Matrix>& GridDataset::image_channels(std::int64_t image) const {
  return channels_.at(static_cast<std::size_t>(image));
}

const Eigen::MatrixXi& GridDataset::label_map(std::int64_t image) const {
  if (split_of(image) == Split::Unlabeled) {
    throw SealedLabelError("label_map: image " + std::to_string(image) +
                           " is unlabeled; its ground truth is sealed");
  }
  return labels_.at(static_cast<std::size_t>(image));
}

const Eigen::MatrixXi& GridDataset::sealed_label_map(std::int64_t image) const {
  return labels_.at(static_cast<std::size_t>(image));
}

Matrix GridDataset::window_features(const std::vector<Matrix>& channels) const {
  const int side = 2 * window_radius_ + 1;
  Matrix out(static_cast<Eigen::Index>(height_) * width_, pixel_feature_dim());
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(r) * width_ + c;
      Eigen::Index col = 0;
      for (const Matrix& ch : channels) {
        for (int dr = -window_radius_; dr <= window_radius_; ++dr) {
          for (int dc = -window_radius_; dc <= window_radius_; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            out(row, col++) = (rr >= 0 && rr < height_ && cc >= 0 && cc < width_)
                                  ? ch(rr, cc)
                                  : 0.0;
          }
        }
      }
    }
  }
  (void)side;
  return out;
}

Matrix GridDataset::window_features(std::int64_t image) const {
  return window_features(image_channels(image));
}

GridDataset gen_grid_seg(std::int64_t n, int height, int width, int class_count,
                         double imbalance, std::uint64_t seed, int window_radius) {
  if (n < 1) throw ConfigError("gen_grid_seg: need at least one image");
  if (class_count < 2) throw ConfigError("gen_grid_seg: class count must be >= 2");
  if (height < 4 || width < 4) throw ConfigError("gen_grid_seg: H and W must be >= 4");
  if (imbalance < 0.0) throw ConfigError("gen_grid_seg: imbalance must be >= 0");

  // Stripe widths proportional to imbalance^c; imbalance 0 degenerates to
  // all-background.
  std::vector<double> weights(static_cast<std::size_t>(class_count));
  double total = 0.0;
  for (int c = 0; c < class_count; ++c) {
    weights[static_cast<std::size_t>(c)] = std::pow(imbalance, c);
    total += weights[static_cast<std::size_t>(c)];
  }
  std::vector<int> boundaries(static_cast<std::size_t>(class_count));  // cumulative columns
  double cumulative = 0.0;
  for (int c = 0; c < class_count; ++c) {
    cumulative += weights[static_cast<std::size_t>(c)] / total;
    boundaries[static_cast<std::size_t>(c)] =
        static_cast<int>(std::llround(cumulative * width));
  }
  boundaries.back() = width;

  const double kColorNoise = 0.25;
  constexpr int kColorChannels = 3;
  std::vector<Vector> palette(static_cast<std::size_t>(class_count));
  for (int c = 0; c < class_count; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / class_count;
    Vector color(kColorChannels);
    color << 0.5 + 0.35 * std::cos(angle),
        0.5 + 0.35 * std::cos(angle - 2.0 * std::numbers::pi / 3.0),
        0.5 + 0.35 * std::cos(angle + 2.0 * std::numbers::pi / 3.0);
    palette[static_cast<std::size_t>(c)] = color;
  }

  Rng rng(seed);
  std::vector<std::vector<Matrix>> channels;
  std::vector<Eigen::MatrixXi> labels;
  channels.reserve(static_cast<std::size_t>(n));
  labels.reserve(static_cast<std::size_t>(n));
  for (std::int64_t img = 0; img < n; ++img) {
    const int shift = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
    Eigen::MatrixXi label_map(height, width);
    for (int r = 0; r < height; ++r) {
      // Jitter boundaries strictly inside the row by at most one column,
      // kept monotone; zero-width stripes stay empty.
      std::vector<int> row_bounds = boundaries;
      int low = 0;
      for (std::size_t b = 0; b + 1 < row_bounds.size(); ++b) {
        if (row_bounds[b] > 0 && row_bounds[b] < width) {
          const int jitter = static_cast<int>(rng.below(3)) - 1;
          row_bounds[b] = std::clamp(row_bounds[b] + jitter, std::max(low, 1), width - 1);
        }
        low = row_bounds[b];
      }
      for (int c = 0; c < width; ++c) {
        const int base_col = (c - shift + width) % width;
        int cls = 0;
        while (base_col >= row_bounds[static_cast<std::size_t>(cls)]) ++cls;
        label_map(r, c) = cls;
      }
    }

    std::vector<Matrix> image(kColorChannels + 2, Matrix(height, width));
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const Vector& color = palette[static_cast<std::size_t>(label_map(r, c))];
        for (int ch = 0; ch < kColorChannels; ++ch) {
          image[static_cast<std::size_t>(ch)](r, c) = color[ch] + kColorNoise * rng.normal();
        }
        image[kColorChannels](r, c) = static_cast<double>(r) / (height - 1);
        image[kColorChannels + 1](r, c) = static_cast<double>(c) / (width - 1);
      }
    }
    channels.push_back(std::move(image));
    labels.push_back(std::move(label_map));
  }
  std::vector<Split> splits(static_cast<std::size_t>(n), Split::Unlabeled);
  return GridDataset(std::move(channels), std::move(labels), std::move(splits), class_count,
                     window_radius);
}

void split_grid(GridDataset& dataset, const GridSplitSpec& spec, std::uint64_t seed) {
  if (spec.labeled_ratio <= 0.0 || spec.labeled_ratio > 1.0) {
    throw ConfigError("split_grid: labeled ratio must lie in (0,1]");
  }
  if (spec.test_fraction < 0.0 || spec.test_fraction >= 1.0) {
    throw ConfigError("split_grid: test fraction must lie in [0,1)");
  }
  const std::int64_t n = dataset.image_count();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_test = static_cast<std::int64_t>(
      std::llround(spec.test_fraction * static_cast<double>(n)));
  const std::int64_t n_train = n - n_test;
  if (spec.valtiny_images >= n_train) {
    throw ConfigError("split_grid: valtiny leaves no training images");
  }
  const std::int64_t labeled_total = std::min<std::int64_t>(
      static_cast<std::int64_t>(
          std::ceil(spec.labeled_ratio * static_cast<double>(n_train))),
      n_train - spec.valtiny_images);

  std::size_t cursor = 0;
  for (std::int64_t i = 0; i < n_test; ++i) dataset.set_split(order[cursor++], Split::Test);
  for (std::int64_t i = 0; i < spec.valtiny_images; ++i) {
    dataset.set_split(order[cursor++], Split::Valtiny);
  }
  for (std::int64_t i = 0; cursor < order.size(); ++i) {
    dataset.set_split(order[cursor++], i < labeled_total ? Split::Labeled : Split::Unlabeled);
  }
}

GridDataset load_grid_csv(const std::string& path, int window_radius) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = split_fields(line);
  if (header.size() < 6 || header[0] != "image" || header[1] != "row" ||
      header[2] != "col" || header[header.size() - 2] != "label" ||
      header.back() != "split") {
    throw ParseError(path + ": expected header image,row,col,f0,...,label,split");
  }
  const std::size_t channel_count = header.size() - 5;

  struct PixelRow {
    std::int64_t image;
    int row, col, label;
    std::vector<double> values;
    Split split;
  };
  std::vector<PixelRow> pixels;
  std::size_t line_no = 1;
  std::int64_t image_count = 0;
  int height = 0, width = 0, max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": wrong field count");
    }
    PixelRow px;
    px.image = static_cast<std::int64_t>(parse_number(fields[0], line_no));
    px.row = static_cast<int>(parse_number(fields[1], line_no));
    px.col = static_cast<int>(parse_number(fields[2], line_no));
    px.values.resize(channel_count);
    for (std::size_t j = 0; j < channel_count; ++j) {
      px.values[j] = parse_number(fields[3 + j], line_no);
    }
    px.label = static_cast<int>(parse_number(fields[header.size() - 2], line_no));
    try {
      px.split = parse_split(fields.back());
    } catch (const ParseError&) {
      throw ParseError("line " + std::to_string(line_no) + ": unknown split tag '" +
                       fields.back() + "'");
    }
    image_count = std::max(image_count, px.image + 1);
    height = std::max(height, px.row + 1);
    width = std::max(width, px.col + 1);
    max_label = std::max(max_label, px.label);
    pixels.push_back(std::move(px));
  }
  if (pixels.empty()) throw ParseError(path + ": no data rows");

  std::vector<std::vector<Matrix>> channels(
      static_cast<std::size_t>(image_count),
      std::vector<Matrix>(channel_count, Matrix::Zero(height, width)));
  std::vector<Eigen::MatrixXi> labels(static_cast<std::size_t>(image_count),
                                      Eigen::MatrixXi::Zero(height, width));
  std::vector<Split> splits(static_cast<std::size_t>(image_count), Split::Unlabeled);
  for (const PixelRow& px : pixels) {
    auto& image = channels[static_cast<std::size_t>(px.image)];
    for (std::size_t j = 0; j < channel_count; ++j) {
      image[j](px.row, px.col) = px.values[j];
    }
    labels[static_cast<std::size_t>(px.image)](px.row, px.col) = px.label;
    splits[static_cast<std::size_t>(px.image)] = px.split;
  }
  return GridDataset(std::move(channels), std::move(labels), std::move(splits),
                     std::max(max_label + 1, 2), window_radius);
}

void save_grid_csv(const GridDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "image,row,col,";
  for (int j = 0; j < dataset.channel_count(); ++j) out << 'f' << j << ',';
  out << "label,split\n";
  for (std::int64_t img = 0; img < dataset.image_count(); ++img) {
    const auto& channels = dataset.image_channels(img);
    const auto& label_map = dataset.sealed_label_map(img);
    const std::string split = split_name(dataset.split_of(img));
    for (int r = 0; r < dataset.height(); ++r) {
      for (int c = 0; c < dataset.width(); ++c) {
        out << img << ',' << r << ',' << c << ',';
        for (const Matrix& ch : channels) out << format_number(ch(r, c)) << ',';
        out << label_map(r, c) << ',' << split << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Matrix jitter_features(const Eigen::Ref<const Matrix>& rows, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ConfigError("jitter: sigma must be >= 0");
  if (sigma == 0.0) return rows;
  Matrix out = rows;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) += sigma * rng.normal();
    }
  }
  return out;
}

void hflip_map(Matrix& map) { map = map.rowwise().reverse().eval(); }

void hflip_map(Eigen::MatrixXi& map) { map = map.rowwise().reverse().eval(); }

void hflip_sample(GridSample& sample) {
  for (Matrix& ch : sample.channels) hflip_map(ch);
  hflip_map(sample.label_map);
  if (sample.weight_map.size() > 0) hflip_map(sample.weight_map);
}

GridSample crop_sample(const GridSample& sample, int top, int left, int crop_height,
                       int crop_width) {
  if (sample.channels.empty()) throw ShapeError("crop: sample has no channels");
  const auto h = static_cast<int>(sample.channels.front().rows());
  const auto w = static_cast<int>(sample.channels.front().cols());
  if (crop_height < 1 || crop_width < 1 || top < 0 || left < 0 || top + crop_height > h ||
      left + crop_width > w) {
    throw ConfigError("crop: window out of bounds");
  }
  GridSample out;
  out.channels.reserve(sample.channels.size());
  for (const Matrix& ch : sample.channels) {
    out.channels.push_back(ch.block(top, left, crop_height, crop_width));
  }
  out.label_map = sample.label_map.block(top, left, crop_height, crop_width);
  if (sample.weight_map.size() > 0) {
    out.weight_map = sample.weight_map.block(top, left, crop_height, crop_width);
  }
  return out;
}

GridSample augment_sample(const GridSample& sample, const AugmentSpec& spec, Rng& rng) {
  GridSample out = sample;
  if (spec.flip_probability > 0.0 && rng.bernoulli(spec.flip_probability)) {
    hflip_sample(out);
  }
  if (spec.crop_height > 0 && spec.crop_width > 0) {
    const auto h = static_cast<int>(out.channels.front().rows());
    const auto w = static_cast<int>(out.channels.front().cols());
    if (spec.crop_height > h || spec.crop_width > w) {
      throw ConfigError("augment: crop larger than image");
    }
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - spec.crop_height + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - spec.crop_width + 1)));
    out = crop_sample(out, top, left, spec.crop_height, spec.crop_width);
  }
  return out;
}

}  // namespace dmt
