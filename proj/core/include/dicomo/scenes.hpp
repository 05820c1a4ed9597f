#pragma once

#include <array>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dicomo/common.hpp"
#include "dicomo/image.hpp"

namespace dicomo::scenes {

inline constexpr int kNumHues = 10;
inline constexpr int kNumScales = 6;
inline constexpr int kNumSizeGroups = 3;
inline constexpr int kNumShapes = 4;
inline constexpr int kNumOrientations = 15;
inline constexpr int kFramesPerClip = 15;
/// floor, wall, object color, scale, shape, orientation
inline constexpr int kNumFactors = 6;

enum class Shape { cube = 0, sphere = 1, cylinder = 2, capsule = 3 };

const std::array<const char*, kNumHues>& color_words();
const std::array<const char*, kNumSizeGroups>& size_words();
const std::array<const char*, kNumShapes>& shape_words();

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

/// Palette entry i: hue 36*i degrees at fixed saturation/value.
Rgb palette_color(int index);
inline constexpr double kPaletteSaturation = 0.8;
inline constexpr double kPaletteValue = 0.9;
inline constexpr Rgb kOutline{26, 26, 26};

/// Ground-truth generative factors of one clip. `orientation` is the index of
/// the first frame; frame i shows orientation + i.
struct FactorSpec {
  int floor_color = 0;
  int wall_color = 0;
  int object_color = 0;
  int scale = 0;
  int shape = 0;
  int orientation = 0;

  int size_group() const { return scale / 2; }
  void validate() const;
  bool same_static(const FactorSpec& o) const {
    return floor_color == o.floor_color && wall_color == o.wall_color &&
           object_color == o.object_color && scale == o.scale && shape == o.shape;
  }
  bool operator==(const FactorSpec&) const = default;
};

struct VideoClip {
  std::string clip_id;
  torch::Tensor frames;  // N x 3 x H x W, float in [0,1]
  std::vector<double> timestamps;
  FactorSpec factors;
  std::vector<std::string> descriptions;

  int num_frames() const { return static_cast<int>(timestamps.size()); }
  int resolution() const { return static_cast<int>(frames.size(2)); }
  /// Per-frame factor rows (N x kNumFactors) with orientation advancing by one.
  std::vector<std::array<int, kNumFactors>> frame_factors() const;
};

struct ObservationSet {
  torch::Tensor frames;  // K x 3 x H x W
  std::vector<double> times;
  std::vector<int> indices;  // frame indices in the source clip
  std::string source_clip_id;

  int size() const { return static_cast<int>(times.size()); }
};

/// Procedural frame: wall band on top, floor band below, one outlined shape
/// whose silhouette, area, fill color and horizontal position/rotation encode
/// shape, scale, object color and orientation.
Image8 render_frame(const FactorSpec& factors, int frame_index, int resolution);

/// Object centroid x (pixels) for an orientation index at a resolution.
double object_center_x(int orientation, int resolution);

/// Templated sentences mentioning size, color and shape only.
std::vector<std::string> describe(const FactorSpec& factors);

/// Renders a whole clip in memory (frames, timestamps i/(N-1), descriptions).
VideoClip render_clip(const FactorSpec& factors, int resolution, std::string clip_id);

struct ManifestRecord {
  std::string clip_id;
  std::string split;
  std::vector<double> timestamps;
  FactorSpec factors;
  std::vector<std::string> descriptions;
};

struct DatasetOptions {
  std::uint64_t seed = 0;
  int n_train = 2000;
  int n_test = 500;
  int resolution = 32;
  std::string out_dir;
  bool overwrite = false;
};

/// Writes `<out_dir>/clips/<id>/frame_XXXX.png`, `manifest.jsonl` and
/// `palette.json`. Train and test never share a static factor combination.
std::vector<ManifestRecord> generate_dataset(const DatasetOptions& opts);

std::vector<ManifestRecord> read_manifest(const std::string& root);
/// Loads every clip of `split` ("train", "test" or "" for all). At most
/// `limit` clips when limit > 0.
std::vector<VideoClip> load_split(const std::string& root, const std::string& split, int limit = 0);

/// First frame plus `k_random` distinct later frames, sorted by time.
ObservationSet sample_observations(const VideoClip& clip, int k_random, Rng& rng);

/// Observation set made of all frames.
ObservationSet all_frames(const VideoClip& clip);

}  // namespace dicomo::scenes
