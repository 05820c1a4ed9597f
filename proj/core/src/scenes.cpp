#include "dicomo/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dicomo::scenes {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<const char*, kNumHues>& color_words() {
  static const std::array<const char*, kNumHues> words = {
      "red", "orange", "yellow", "lime", "green", "cyan", "azure", "blue", "purple", "magenta"};
  return words;
}

const std::array<const char*, kNumSizeGroups>& size_words() {
  static const std::array<const char*, kNumSizeGroups> words = {"small", "medium", "big"};
  return words;
}

const std::array<const char*, kNumShapes>& shape_words() {
  static const std::array<const char*, kNumShapes> words = {"cube", "sphere", "cylinder", "capsule"};
  return words;
}

Rgb palette_color(int index) {
  require(index >= 0 && index < kNumHues, "palette index out of range");
  const double h = 36.0 * index / 60.0;
  const double c = kPaletteValue * kPaletteSaturation;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const double m = kPaletteValue - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  auto q = [m](double v) { return static_cast<std::uint8_t>(std::lround((v + m) * 255.0)); };
  return {q(r), q(g), q(b)};
}

void FactorSpec::validate() const {
  require(floor_color >= 0 && floor_color < kNumHues, "floor_color out of range");
  require(wall_color >= 0 && wall_color < kNumHues, "wall_color out of range");
  require(object_color >= 0 && object_color < kNumHues, "object_color out of range");
  require(scale >= 0 && scale < kNumScales, "scale out of range");
  require(shape >= 0 && shape < kNumShapes, "shape out of range");
  require(orientation >= 0 && orientation < kNumOrientations, "orientation out of range");
}

std::vector<std::array<int, kNumFactors>> VideoClip::frame_factors() const {
  std::vector<std::array<int, kNumFactors>> rows;
  for (int i = 0; i < num_frames(); ++i)
    rows.push_back({factors.floor_color, factors.wall_color, factors.object_color, factors.scale,
                    factors.shape, factors.orientation + i});
  return rows;
}

namespace {

constexpr double kHorizon = 0.6;
constexpr int kSupersample = 4;

double sd_box(double u, double v, double hx, double hy) {
  const double dx = std::abs(u) - hx;
  const double dy = std::abs(v) - hy;
  const double ox = std::max(dx, 0.0);
  const double oy = std::max(dy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
}

double sd_capsule(double u, double v, double half_len, double radius) {
  const double cv = std::clamp(v, -half_len, half_len);
  return std::hypot(u, v - cv) - radius;
}

double object_radius(int scale, int resolution) { return resolution * (0.09 + 0.025 * scale); }

double shape_distance(Shape shape, double u, double v, double r) {
  switch (shape) {
    case Shape::cube: return sd_box(u, v, r, r);
    case Shape::sphere: return std::hypot(u, v) - 1.1 * r;
    case Shape::cylinder: return sd_box(u, v, 0.7 * r, 1.25 * r);
    case Shape::capsule: return sd_capsule(u, v, 0.8 * r, 0.55 * r);
  }
  return 1e9;
}

}  // namespace

double object_center_x(int orientation, int resolution) {
  return resolution * (0.5 + 0.3 * (orientation / double(kNumOrientations - 1) - 0.5));
}

Image8 render_frame(const FactorSpec& factors, int frame_index, int resolution) {
  factors.validate();
  require(resolution == 32 || resolution == 64, "resolution must be 32 or 64");
  const int orientation = factors.orientation + frame_index;
  require(frame_index >= 0 && orientation < kNumOrientations, "frame index out of range");

  const Rgb wall = palette_color(factors.wall_color);
  const Rgb floor = palette_color(factors.floor_color);
  const Rgb object = palette_color(factors.object_color);
  const auto shape = static_cast<Shape>(factors.shape);
  const double r = object_radius(factors.scale, resolution);
  const double cx = object_center_x(orientation, resolution);
  const double cy = kHorizon * resolution;
  const double theta = orientation / double(kNumOrientations - 1) * std::numbers::pi / 3.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double outline = resolution / 32.0;

  Image8 img(resolution, resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = x + (sx + 0.5) / kSupersample;
          const double py = y + (sy + 0.5) / kSupersample;
          const double dx = px - cx, dy = py - cy;
          const double u = ct * dx + st * dy;
          const double v = -st * dx + ct * dy;
          const double d = shape_distance(shape, u, v, r);
          Rgb c = py < cy ? wall : floor;
          if (d <= 0.0)
            c = object;
          else if (d <= outline)
            c = kOutline;
          acc[0] += c.r;
          acc[1] += c.g;
          acc[2] += c.b;
        }
      }
      auto* p = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch)
        p[ch] = static_cast<std::uint8_t>(std::lround(acc[ch] / (kSupersample * kSupersample)));
    }
  }
  return img;
}

std::vector<std::string> describe(const FactorSpec& factors) {
  factors.validate();
  const std::string size = size_words()[factors.size_group()];
  const std::string color = color_words()[factors.object_color];
  const std::string shape = shape_words()[factors.shape];
  return {
      "There is a " + size + " " + color + " " + shape + ".",
      "A " + size + " " + color + " " + shape + " is in the scene.",
      "The " + shape + " is " + size + " and " + color + ".",
  };
}

VideoClip render_clip(const FactorSpec& factors, int resolution, std::string clip_id) {
  require(factors.orientation + kFramesPerClip <= kNumOrientations,
          "orientation sweep would leave the valid range");
  VideoClip clip;
  clip.clip_id = std::move(clip_id);
  clip.factors = factors;
  clip.descriptions = describe(factors);
  std::vector<torch::Tensor> frames;
  for (int i = 0; i < kFramesPerClip; ++i) {
    frames.push_back(to_tensor(render_frame(factors, i, resolution)));
    clip.timestamps.push_back(i / double(kFramesPerClip - 1));
  }
  clip.frames = torch::stack(frames);
  return clip;
}

namespace {

json factors_to_json(const FactorSpec& f) {
  return {{"floor_color", f.floor_color}, {"wall_color", f.wall_color},
          {"object_color", f.object_color}, {"scale", f.scale},
          {"size", size_words()[f.size_group()]}, {"shape", f.shape},
          {"shape_name", shape_words()[f.shape]}, {"orientation", f.orientation}};
}

FactorSpec factors_from_json(const json& j) {
  FactorSpec f;
  f.floor_color = j.at("floor_color").get<int>();
  f.wall_color = j.at("wall_color").get<int>();
  f.object_color = j.at("object_color").get<int>();
  f.scale = j.at("scale").get<int>();
  f.shape = j.at("shape").get<int>();
  f.orientation = j.at("orientation").get<int>();
  f.validate();
  return f;
}

FactorSpec decode_combo(int combo) {
  FactorSpec f;
  f.shape = combo % kNumShapes;
  combo /= kNumShapes;
  f.scale = combo % kNumScales;
  combo /= kNumScales;
  f.object_color = combo % kNumHues;
  combo /= kNumHues;
  f.wall_color = combo % kNumHues;
  combo /= kNumHues;
  f.floor_color = combo;
  return f;
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.png", i);
  return buf;
}

std::string clip_name(const std::string& split, int i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s-%06d", split.c_str(), i);
  return buf;
}

}  // namespace

std::vector<ManifestRecord> generate_dataset(const DatasetOptions& opts) {
  require(opts.n_train >= 1 && opts.n_test >= 1, "dataset counts must be >= 1");
  constexpr int kCombos = kNumHues * kNumHues * kNumHues * kNumScales * kNumShapes;
  require(opts.n_train + opts.n_test <= kCombos,
          "n_train + n_test exceeds the number of static factor combinations");
  require(opts.resolution == 32 || opts.resolution == 64, "resolution must be 32 or 64");
  require(!opts.out_dir.empty(), "out_dir must be set");

  const fs::path root(opts.out_dir);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!opts.overwrite)
      throw ValidationError("output directory '" + opts.out_dir + "' exists; pass overwrite");
    fs::remove_all(root);
  }
  std::error_code ec;
  fs::create_directories(root / "clips", ec);
  if (ec) throw RuntimeFailure("cannot create '" + opts.out_dir + "': " + ec.message());

  // Partial Fisher-Yates over static combinations: the first n_train go to
  // train, the next n_test to test, so the splits are disjoint.
  Rng rng(derive_seed(opts.seed, 0));
  std::vector<int> combos(kCombos);
  for (int i = 0; i < kCombos; ++i) combos[i] = i;
  const int total = opts.n_train + opts.n_test;
  for (int i = 0; i < total; ++i) {
    const auto j = i + uniform_index(rng, static_cast<std::size_t>(kCombos - i));
    std::swap(combos[i], combos[j]);
  }

  std::vector<ManifestRecord> records;
  records.reserve(total);
  std::ofstream manifest(root / "manifest.jsonl");
  if (!manifest) throw RuntimeFailure("cannot write manifest in '" + opts.out_dir + "'");
  for (int i = 0; i < total; ++i) {
    const bool train = i < opts.n_train;
    ManifestRecord rec;
    rec.split = train ? "train" : "test";
    rec.clip_id = clip_name(rec.split, train ? i : i - opts.n_train);
    rec.factors = decode_combo(combos[i]);
    rec.descriptions = describe(rec.factors);
    const fs::path dir = root / "clips" / rec.clip_id;
    fs::create_directories(dir, ec);
    if (ec) throw RuntimeFailure("cannot create '" + dir.string() + "': " + ec.message());
    for (int f = 0; f < kFramesPerClip; ++f) {
      write_png((dir / frame_name(f)).string(), render_frame(rec.factors, f, opts.resolution));
      rec.timestamps.push_back(f / double(kFramesPerClip - 1));
    }
    json line = {{"clip_id", rec.clip_id},
                 {"split", rec.split},
                 {"timestamps", rec.timestamps},
                 {"factors", factors_to_json(rec.factors)},
                 {"descriptions", rec.descriptions},
                 {"resolution", opts.resolution}};
    manifest << line.dump() << '\n';
    records.push_back(std::move(rec));
  }
  if (!manifest) throw RuntimeFailure("failed writing manifest");

  json palette = json::array();
  for (int i = 0; i < kNumHues; ++i) {
    const auto c = palette_color(i);
    palette.push_back({{"index", i},
                       {"hue_degrees", 36 * i},
                       {"word", color_words()[i]},
                       {"rgb", {c.r, c.g, c.b}}});
  }
  json palette_doc = {{"saturation", kPaletteSaturation},
                      {"value", kPaletteValue},
                      {"hues", palette},
                      {"sizes", size_words()},
                      {"shapes", shape_words()}};
  std::ofstream(root / "palette.json") << palette_doc.dump(2) << '\n';
  return records;
}

std::vector<ManifestRecord> read_manifest(const std::string& root) {
  std::ifstream in(fs::path(root) / "manifest.jsonl");
  if (!in) throw RuntimeFailure("cannot open manifest under '" + root + "'");
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      ManifestRecord rec;
      rec.clip_id = j.at("clip_id").get<std::string>();
      rec.split = j.at("split").get<std::string>();
      rec.timestamps = j.at("timestamps").get<std::vector<double>>();
      rec.factors = factors_from_json(j.at("factors"));
      rec.descriptions = j.at("descriptions").get<std::vector<std::string>>();
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw RuntimeFailure("malformed manifest line: " + std::string(e.what()));
    }
  }
  return out;
}

std::vector<VideoClip> load_split(const std::string& root, const std::string& split, int limit) {
  std::vector<VideoClip> clips;
  for (auto& rec : read_manifest(root)) {
    if (!split.empty() && rec.split != split) continue;
    if (limit > 0 && static_cast<int>(clips.size()) >= limit) break;
    VideoClip clip;
    clip.clip_id = rec.clip_id;
    clip.factors = rec.factors;
    clip.descriptions = std::move(rec.descriptions);
    clip.timestamps = std::move(rec.timestamps);
    std::vector<torch::Tensor> frames;
    const fs::path dir = fs::path(root) / "clips" / clip.clip_id;
    for (int f = 0; f < clip.num_frames(); ++f)
      frames.push_back(to_tensor(read_png((dir / frame_name(f)).string())));
    clip.frames = torch::stack(frames);
    clips.push_back(std::move(clip));
  }
  return clips;
}

ObservationSet sample_observations(const VideoClip& clip, int k_random, Rng& rng) {
  const int n = clip.num_frames();
  require(k_random >= 0 && 1 + k_random <= n, "k_random too large for the clip");
  std::vector<int> rest(n - 1);
  for (int i = 0; i < n - 1; ++i) rest[i] = i + 1;
  for (int i = 0; i < k_random; ++i) {
    const auto j = i + uniform_index(rng, rest.size() - i);
    std::swap(rest[i], rest[j]);
  }
  std::vector<int> picked{0};
  picked.insert(picked.end(), rest.begin(), rest.begin() + k_random);
  std::sort(picked.begin(), picked.end());

  ObservationSet obs;
  obs.source_clip_id = clip.clip_id;
  obs.indices = picked;
  for (int i : picked) obs.times.push_back(clip.timestamps[i]);
  obs.frames = clip.frames.index_select(0, torch::tensor(std::vector<std::int64_t>(picked.begin(), picked.end())));
  return obs;
}

ObservationSet all_frames(const VideoClip& clip) {
  ObservationSet obs;
  obs.source_clip_id = clip.clip_id;
  obs.frames = clip.frames;
  obs.times = clip.timestamps;
  for (int i = 0; i < clip.num_frames(); ++i) obs.indices.push_back(i);
  return obs;
}

}  // namespace dicomo::scenes
