#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pushbound/geometry.hpp"

namespace pushbound {

// Labeled point cloud: positions in meters, per-point input features
// (RGB in [0,1], optionally followed by unit normals), semantic labels in [0, K).
struct LabeledCloud {
  std::vector<Point3> positions;
  std::vector<double> features;  // row-major N x feature_width
  std::size_t feature_width = 0;
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const { return positions.size(); }
  bool has_normals() const { return feature_width == 6; }
  std::array<double, 3> color(std::size_t i) const {
    return {features[i * feature_width], features[i * feature_width + 1],
            features[i * feature_width + 2]};
  }
};

void validate_cloud(const LabeledCloud& cloud);

// Axis-aligned rectangle in 3D: origin corner plus two perpendicular
// axis-aligned edges. Carries the semantic class of the points sampled on it.
struct SurfaceRect {
  Point3 origin;
  Point3 edge_u;  // first edge vector (axis-aligned)
  Point3 edge_v;  // second edge vector
  std::uint32_t class_id = 0;
  double area() const;
  Point3 unit_normal() const;
};

struct ClassColorModel {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  double jitter = 0.05;  // uniform +- jitter per channel
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t num_points = 4096;
  std::uint32_t num_classes = 6;
  double position_noise = 0.005;  // meters, isotropic gaussian
  bool with_normals = true;
  std::array<double, 3> room_extent{6.0, 4.0, 2.5};
  std::vector<SurfaceRect> primitives;
  std::vector<ClassColorModel> colors;  // one per class
  std::vector<std::string> class_names;
};

// Indoor-like room: floor, ceiling, four walls, boards embedded coplanar in
// the walls, box columns, and clutter boxes on the floor. Class seams on the
// boards are purely semantic (no geometric discontinuity).
SceneSpec default_room_spec(std::uint64_t seed, std::size_t num_points = 4096,
                            std::uint32_t num_classes = 6, double position_noise = 0.005,
                            bool with_normals = true);

LabeledCloud generate(const SceneSpec& spec);

// Seed-deterministic split: specs ordered by seed, the first round(ratio * n)
// go to training. Both sides must be nonempty.
std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> train_test_split(
    std::vector<SceneSpec> specs, double ratio);

// Deterministic RNG used by the generator so clouds are reproducible
// independent of the standard library's distribution implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();                   // [0, 1)
  double uniform(double lo, double hi);
  double gaussian(double sigma);      // Box-Muller
 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pushbound
