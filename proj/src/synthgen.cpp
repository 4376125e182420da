#include "pushbound/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pushbound/errors.hpp"

namespace pushbound {

std::uint64_t SplitMix64::next() {
  state_ += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SplitMix64::gaussian(double sigma) {
  if (have_spare_) {
    have_spare_ = false;
    return spare_ * sigma;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * M_PI * u2);
  have_spare_ = true;
  return mag * std::cos(2.0 * M_PI * u2) * sigma;
}

double SurfaceRect::area() const {
  return edge_u.norm() * edge_v.norm();
}

Point3 SurfaceRect::unit_normal() const {
  const Point3 n{edge_u.y * edge_v.z - edge_u.z * edge_v.y,
                 edge_u.z * edge_v.x - edge_u.x * edge_v.z,
                 edge_u.x * edge_v.y - edge_u.y * edge_v.x};
  const double len = n.norm();
  return {n.x / len, n.y / len, n.z / len};
}

void validate_cloud(const LabeledCloud& cloud) {
  if (cloud.size() == 0) throw DataError("cloud is empty");
  if (cloud.labels.size() != cloud.size() ||
      cloud.features.size() != cloud.size() * cloud.feature_width)
    throw DataError("cloud field lengths are inconsistent");
  if (cloud.feature_width != 3 && cloud.feature_width != 6)
    throw DataError("feature width must be 3 (RGB) or 6 (RGB + normals)");
  for (std::uint32_t label : cloud.labels)
    if (label >= cloud.num_classes)
      throw DataError("label " + std::to_string(label) + " out of range for K=" +
                      std::to_string(cloud.num_classes));
  for (const Point3& p : cloud.positions)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw DataError("non-finite position");
  for (double f : cloud.features)
    if (!std::isfinite(f)) throw DataError("non-finite feature value");
  if (cloud.has_normals()) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double* n = cloud.features.data() + i * 6 + 3;
      const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
      if (std::abs(len - 1.0) > 1e-6)
        throw DataError("normal at point " + std::to_string(i) + " is not unit length");
    }
  }
}

namespace {

const std::array<const char*, 6> kClassNames = {"floor", "wall", "ceiling",
                                                "board", "column", "clutter"};
const std::array<ClassColorModel, 6> kClassColors = {{
    {{0.45, 0.42, 0.38}, 0.05},  // floor
    {{0.75, 0.74, 0.70}, 0.06},  // wall
    {{0.88, 0.88, 0.86}, 0.04},  // ceiling
    {{0.62, 0.60, 0.55}, 0.06},  // board: deliberately near the wall tone
    {{0.55, 0.52, 0.50}, 0.05},  // column
    {{0.35, 0.45, 0.60}, 0.08},  // clutter
}};

constexpr std::uint32_t kFloor = 0, kWall = 1, kCeiling = 2, kBoard = 3, kColumn = 4,
                        kClutter = 5;

// Wall rectangle in plane `axis`=coord with a coplanar board patch cut out.
// u is the in-plane horizontal axis, z the vertical one.
void add_wall_with_board(std::vector<SurfaceRect>& rects, int axis, double coord, double u_len,
                         double height, bool with_board, SplitMix64& rng) {
  auto make = [&](double u0, double u1, double z0, double z1, std::uint32_t cls) {
    if (u1 - u0 <= 0.0 || z1 - z0 <= 0.0) return;
    SurfaceRect r;
    if (axis == 0) {  // plane x = coord, u runs along y
      r.origin = {coord, u0, z0};
      r.edge_u = {0.0, u1 - u0, 0.0};
    } else {  // plane y = coord, u runs along x
      r.origin = {u0, coord, z0};
      r.edge_u = {u1 - u0, 0.0, 0.0};
    }
    r.edge_v = {0.0, 0.0, z1 - z0};
    r.class_id = cls;
    rects.push_back(r);
  };

  if (!with_board) {
    make(0.0, u_len, 0.0, height, kWall);
    return;
  }
  const double bw = rng.uniform(1.0, std::min(1.8, u_len - 1.2));
  const double bh = rng.uniform(0.7, std::min(1.2, height - 1.0));
  const double u0 = rng.uniform(0.5, u_len - 0.5 - bw);
  const double z0 = rng.uniform(0.7, height - 0.3 - bh);
  // four wall pieces framing the opening, plus the coplanar board patch
  make(0.0, u0, 0.0, height, kWall);
  make(u0 + bw, u_len, 0.0, height, kWall);
  make(u0, u0 + bw, 0.0, z0, kWall);
  make(u0, u0 + bw, z0 + bh, height, kWall);
  make(u0, u0 + bw, z0, z0 + bh, kBoard);
}

void add_box(std::vector<SurfaceRect>& rects, double x0, double y0, double sx, double sy,
             double z0, double z1, std::uint32_t cls, bool with_top) {
  const double h = z1 - z0;
  rects.push_back({{x0, y0, z0}, {sx, 0, 0}, {0, 0, h}, cls});
  rects.push_back({{x0, y0 + sy, z0}, {sx, 0, 0}, {0, 0, h}, cls});
  rects.push_back({{x0, y0, z0}, {0, sy, 0}, {0, 0, h}, cls});
  rects.push_back({{x0 + sx, y0, z0}, {0, sy, 0}, {0, 0, h}, cls});
  if (with_top) rects.push_back({{x0, y0, z1}, {sx, 0, 0}, {0, sy, 0}, cls});
}

}  // namespace

SceneSpec default_room_spec(std::uint64_t seed, std::size_t num_points, std::uint32_t num_classes,
                            double position_noise, bool with_normals) {
  if (num_classes < 2 || num_classes > 6)
    throw DataError("default room spec supports 2..6 classes, got " + std::to_string(num_classes));
  SceneSpec spec;
  spec.seed = seed;
  spec.num_points = num_points;
  spec.num_classes = num_classes;
  spec.position_noise = position_noise;
  spec.with_normals = with_normals;

  const double w = spec.room_extent[0], d = spec.room_extent[1], h = spec.room_extent[2];
  SplitMix64 layout(seed ^ 0x5ca1ab1edeadbeefull);

  auto& rects = spec.primitives;
  rects.push_back({{0, 0, 0}, {w, 0, 0}, {0, d, 0}, kFloor});
  if (num_classes > kCeiling)
    rects.push_back({{0, 0, h}, {w, 0, 0}, {0, d, 0}, kCeiling});

  if (num_classes > kWall) {
    const bool boards = num_classes > kBoard;
    add_wall_with_board(rects, 1, 0.0, w, h, boards, layout);
    add_wall_with_board(rects, 1, d, w, h, boards, layout);
    add_wall_with_board(rects, 0, 0.0, d, h, boards, layout);
    add_wall_with_board(rects, 0, w, d, h, false, layout);
  }

  if (num_classes > kColumn) {
    const double t = 0.35;
    const double cx = layout.uniform(1.0, w - 1.0 - t);
    const double cy = layout.uniform(1.0, d - 1.0 - t);
    add_box(rects, cx, cy, t, t, 0.0, h, kColumn, false);
  }

  if (num_classes > kClutter) {
    const int boxes = 2 + static_cast<int>(layout.next() % 2);
    for (int b = 0; b < boxes; ++b) {
      const double sx = layout.uniform(0.35, 0.7);
      const double sy = layout.uniform(0.35, 0.7);
      const double bz = layout.uniform(0.3, 0.8);
      const double bx = layout.uniform(0.5, w - 0.5 - sx);
      const double by = layout.uniform(0.5, d - 0.5 - sy);
      add_box(rects, bx, by, sx, sy, 0.0, bz, kClutter, true);
    }
  }

  spec.colors.assign(kClassColors.begin(), kClassColors.begin() + num_classes);
  spec.class_names.assign(kClassNames.begin(), kClassNames.begin() + num_classes);
  return spec;
}

LabeledCloud generate(const SceneSpec& spec) {
  if (spec.num_points == 0) throw DataError("scene spec requests zero points");
  if (spec.primitives.empty()) throw DataError("scene spec has no primitives");
  if (spec.colors.size() < spec.num_classes)
    throw DataError("scene spec is missing color models");

  std::vector<double> cumulative;
  cumulative.reserve(spec.primitives.size());
  double total_area = 0.0;
  for (const SurfaceRect& r : spec.primitives) {
    const double a = r.area();
    if (a <= 0.0) throw DataError("degenerate primitive with zero area");
    if (r.class_id >= spec.num_classes)
      throw DataError("primitive class " + std::to_string(r.class_id) + " out of range");
    total_area += a;
    cumulative.push_back(total_area);
  }

  LabeledCloud cloud;
  cloud.num_classes = spec.num_classes;
  cloud.feature_width = spec.with_normals ? 6 : 3;
  cloud.positions.resize(spec.num_points);
  cloud.labels.resize(spec.num_points);
  cloud.features.resize(spec.num_points * cloud.feature_width);

  SplitMix64 rng(spec.seed);
  for (std::size_t i = 0; i < spec.num_points; ++i) {
    const double pick = rng.uniform() * total_area;
    const std::size_t pi =
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    const SurfaceRect& rect = spec.primitives[std::min(pi, spec.primitives.size() - 1)];

    const double u = rng.uniform(), v = rng.uniform();
    Point3 p{rect.origin.x + u * rect.edge_u.x + v * rect.edge_v.x,
             rect.origin.y + u * rect.edge_u.y + v * rect.edge_v.y,
             rect.origin.z + u * rect.edge_u.z + v * rect.edge_v.z};
    if (spec.position_noise > 0.0) {
      p.x += rng.gaussian(spec.position_noise);
      p.y += rng.gaussian(spec.position_noise);
      p.z += rng.gaussian(spec.position_noise);
    }
    cloud.positions[i] = p;
    cloud.labels[i] = rect.class_id;

    const ClassColorModel& cm = spec.colors[rect.class_id];
    double* feat = cloud.features.data() + i * cloud.feature_width;
    for (int c = 0; c < 3; ++c)
      feat[c] = std::clamp(cm.mean[c] + cm.jitter * rng.uniform(-1.0, 1.0), 0.0, 1.0);
    if (spec.with_normals) {
      const Point3 n = rect.unit_normal();
      feat[3] = n.x;
      feat[4] = n.y;
      feat[5] = n.z;
    }
  }
  return cloud;
}

std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> train_test_split(
    std::vector<SceneSpec> specs, double ratio) {
  if (specs.empty()) throw DataError("train_test_split: no scenes");
  std::sort(specs.begin(), specs.end(),
            [](const SceneSpec& a, const SceneSpec& b) { return a.seed < b.seed; });
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(specs.size())));
  if (n_train == 0 || n_train >= specs.size())
    throw DataError("train_test_split: ratio " + std::to_string(ratio) +
                    " leaves an empty side for " + std::to_string(specs.size()) + " scenes");
  std::vector<SceneSpec> train(specs.begin(), specs.begin() + n_train);
  std::vector<SceneSpec> test(specs.begin() + n_train, specs.end());
  return {std::move(train), std::move(test)};
}

}  // namespace pushbound
