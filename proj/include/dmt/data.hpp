#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmt/core.hpp"
#include "dmt/rng.hpp"

namespace dmt {

enum class Split { Labeled, Unlabeled, Valtiny, Test };

std::string split_name(Split split);
Split parse_split(const std::string& name);

// Row-tagged tabular dataset. Ground truth of unlabeled rows is kept in a
// sealed side-channel: label_of() refuses those rows, the analyzer goes
// through sealed_label_of() explicitly.
class TabularDataset {
 public:
  TabularDataset() = default;
  // labels: -1 marks an absent label (allowed only on unlabeled rows).
  TabularDataset(Matrix features, std::vector<int> labels, std::vector<Split> splits,
                 int class_count);

  std::int64_t row_count() const { return features_.rows(); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  int class_count() const { return class_count_; }

  const Matrix& features() const { return features_; }
  Split split_of(std::int64_t row) const { return splits_.at(static_cast<std::size_t>(row)); }

  /// Training-path accessor; throws SealedLabelError on unlabeled rows.
  int label_of(std::int64_t row) const;

  bool has_sealed_label(std::int64_t row) const;
  /// Analyzer-only channel; also serves labeled rows.
  int sealed_label_of(std::int64_t row) const;

  std::vector<std::int64_t> rows_of(Split split) const;
  Matrix gather(std::span<const std::int64_t> rows) const;

  void set_split(std::int64_t row, Split split);

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<Split> splits_;
  int class_count_ = 0;
};

// Two interleaving half-circle clusters with Gaussian jitter. separation
// shifts the second arc down; sigma = 0 with a large separation is linearly
// separable. Rows arrive untagged (all Unlabeled) until split_dataset runs.
TabularDataset gen_toy_binary(std::int64_t n, double class_separation, double noise_sigma,
                              std::uint64_t seed);

struct SplitSpec {
  double labeled_ratio = 0.125;  // of the post-test training pool
  std::int64_t valtiny_size = 50;
  double test_fraction = 0.2;
  bool stratify = true;
};

// Tags every row: held-out test fraction first, then valtiny, then a
// stratified labeled draw of ceil(ratio * n_train); the rest is unlabeled.
void split_dataset(TabularDataset& dataset, const SplitSpec& spec, std::uint64_t seed);

// CSV with header f0,...,fk,label,split; '-' marks an absent label.
TabularDataset load_csv(const std::string& path);
void save_csv(const TabularDataset& dataset, const std::string& path);

// Pixel task: images of noisy class stripes. Channel layout is
// base color channels plus two normalized coordinate channels, so the
// per-pixel window over all channels is the whole model input.
class GridDataset {
 public:
  GridDataset() = default;
  GridDataset(std::vector<std::vector<Matrix>> channels, std::vector<Eigen::MatrixXi> labels,
              std::vector<Split> splits, int class_count, int window_radius);

  std::int64_t image_count() const { return static_cast<std::int64_t>(channels_.size()); }
  int height() const { return height_; }
  int width() const { return width_; }
  int channel_count() const { return channel_count_; }
  int class_count() const { return class_count_; }
  int window_radius() const { return window_radius_; }
  int pixel_feature_dim() const;

  Split split_of(std::int64_t image) const { return splits_.at(static_cast<std::size_t>(image)); }
  void set_split(std::int64_t image, Split split);
  std::vector<std::int64_t> images_of(Split split) const;

  const std::vector<Matrix>& image_channels(std::int64_t image) const;

  /// Training-path accessor; throws SealedLabelError on unlabeled images.
  const Eigen::MatrixXi& label_map(std::int64_t image) const;
  /// Analyzer-only channel.
  const Eigen::MatrixXi& sealed_label_map(std::int64_t image) const;

  /// Window features (zero-padded) for every pixel of the given channels,
  /// rows in (row, col) lexicographic order.
  Matrix window_features(const std::vector<Matrix>& channels) const;
  Matrix window_features(std::int64_t image) const;

 private:
  std::vector<std::vector<Matrix>> channels_;
  std::vector<Eigen::MatrixXi> labels_;
  std::vector<Split> splits_;
  int class_count_ = 0;
  int window_radius_ = 1;
  int height_ = 0;
  int width_ = 0;
  int channel_count_ = 0;
};

// Stripe widths follow imbalance^c per class c (imbalance 1 = balanced,
// 0 = background only); boundaries are cyclically shifted per image and
// jittered per row.
GridDataset gen_grid_seg(std::int64_t n, int height, int width, int class_count,
                         double imbalance, std::uint64_t seed, int window_radius = 1);

struct GridSplitSpec {
  double labeled_ratio = 0.125;
  std::int64_t valtiny_images = 2;
  double test_fraction = 0.2;
};

void split_grid(GridDataset& dataset, const GridSplitSpec& spec, std::uint64_t seed);

// CSV with header image,row,col,f0,...,fk,label,split (one row per pixel).
GridDataset load_grid_csv(const std::string& path, int window_radius = 1);
void save_grid_csv(const GridDataset& dataset, const std::string& path);

struct AugmentSpec {
  double feature_jitter_sigma = 0.0;  // classification
  double flip_probability = 0.0;      // pixel
  int crop_height = 0;                // pixel; 0 disables cropping
  int crop_width = 0;
};

/// Additive Gaussian jitter on every feature.
Matrix jitter_features(const Eigen::Ref<const Matrix>& rows, double sigma, Rng& rng);

/// In-place horizontal mirror of one H x W map.
void hflip_map(Matrix& map);
void hflip_map(Eigen::MatrixXi& map);

// One image with whatever per-pixel maps ride along (labels, weights);
// flip/crop keep them aligned.
struct GridSample {
  std::vector<Matrix> channels;
  Eigen::MatrixXi label_map;
  Matrix weight_map;  // empty when unused
};

void hflip_sample(GridSample& sample);
GridSample crop_sample(const GridSample& sample, int top, int left, int crop_height,
                       int crop_width);

/// Random flip/crop per spec; pseudo labels are never recomputed here.
GridSample augment_sample(const GridSample& sample, const AugmentSpec& spec, Rng& rng);

}  // namespace dmt
