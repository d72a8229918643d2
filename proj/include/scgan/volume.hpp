#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scgan/common.hpp"

namespace scgan {

using Affine = Eigen::Matrix4d;
using Spacing = std::array<double, 3>;

/// Which anatomical world axis (0=R/L, 1=A/P, 2=S/I) each voxel axis runs
/// along, and in which direction. "RAS" is {0,1,2} with all signs positive.
struct Orientation {
  std::array<int, 3> world_axis{0, 1, 2};
  std::array<int, 3> sign{1, 1, 1};

  [[nodiscard]] std::string code() const;
  [[nodiscard]] bool is_ras() const { return code() == "RAS"; }
  bool operator==(const Orientation&) const = default;

  /// Parses a 3-letter code such as "LPS" or "PSR".
  static Orientation parse(const std::string& code);
  /// Decodes the orientation from the affine's columns: each voxel axis is
  /// assigned the world axis of its largest-magnitude component, ties going
  /// to the lower world axis, voxel axes processed in x, y, z order.
  static Orientation from_affine(const Affine& affine);
  /// All 48 permutation/sign combinations.
  static std::vector<Orientation> all();
};

/// Affine with the given orientation and spacing, origin at `origin`.
Affine make_affine(const Orientation& orientation, const Spacing& spacing,
                   const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

/// Column norms of the affine's linear part.
Spacing spacing_from_affine(const Affine& affine);

/// 3D scalar scan. Voxel (i,j,k) maps to world position affine * (i,j,k,1).
struct Volume {
  Dims dims;
  std::vector<float> data;
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine = Affine::Identity();

  Volume() = default;
  explicit Volume(Dims d, float fill = 0.0F);
  Volume(Dims d, const Affine& a);

  [[nodiscard]] float at(int i, int j, int k) const { return data[dims.index(i, j, k)]; }
  float& at(int i, int j, int k) { return data[dims.index(i, j, k)]; }

  [[nodiscard]] std::string orientation() const { return Orientation::from_affine(affine).code(); }

  /// Throws ValidationError when a type invariant does not hold.
  void validate() const;
};

struct LabelInfo {
  int id = 0;
  std::string name;
  bool operator==(const LabelInfo&) const = default;
};

using LabelSet = std::vector<LabelInfo>;

/// The seven whole-heart structures with their ids as used by the phantom
/// generator (1..7 in this order): MYO, LAC, LVC, RAC, RVC, AA, PA.
LabelSet default_label_set();
/// MMWHS raw label values (205, 420, 500, 550, 600, 820, 850) with names.
LabelSet mmwhs_label_set();

/// Integer label grid aligned to a Volume; 0 is background.
struct LabelMap {
  Dims dims;
  std::vector<std::int32_t> data;
  LabelSet label_set;
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine = Affine::Identity();

  LabelMap() = default;
  explicit LabelMap(Dims d, LabelSet labels = {});

  [[nodiscard]] std::int32_t at(int i, int j, int k) const { return data[dims.index(i, j, k)]; }
  std::int32_t& at(int i, int j, int k) { return data[dims.index(i, j, k)]; }

  /// Copies the geometry (dims, spacing, affine) of a volume.
  static LabelMap like(const Volume& v, LabelSet labels);

  [[nodiscard]] std::size_t count(std::int32_t label) const;
  /// Sorted distinct values present, background included when present.
  [[nodiscard]] std::vector<std::int32_t> present_values() const;
  void validate() const;
};

enum class Domain { A, B };
enum class Provenance { original, augmented, synthesized };

std::string to_string(Domain d);
std::string to_string(Provenance p);
Domain parse_domain(const std::string& s);
Provenance parse_provenance(const std::string& s);
inline Domain other(Domain d) { return d == Domain::A ? Domain::B : Domain::A; }

struct Sample {
  Volume volume;
  LabelMap labels;
  Domain domain = Domain::A;
  Provenance provenance = Provenance::original;
  std::string id;

  /// Volume and labels share shape, spacing and affine.
  void validate() const;
};

}  // namespace scgan
