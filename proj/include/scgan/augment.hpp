#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scgan/rng.hpp"
#include "scgan/volume.hpp"

namespace scgan {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Range&) const = default;
};

enum class NormalizationMode { zscore, rescale_unit };
enum class AugmentMode { one_of, compose };
enum class Family { anisotropy, elastic, affine };

std::string to_string(NormalizationMode m);
std::string to_string(AugmentMode m);
std::string to_string(Family f);
NormalizationMode parse_normalization_mode(const std::string& s);
AugmentMode parse_augment_mode(const std::string& s);
Family parse_family(const std::string& s);

struct NormalizationSpec {
  NormalizationMode mode = NormalizationMode::zscore;
  double clip_low = 0.5;    // percentile
  double clip_high = 99.5;  // percentile
};

struct AnisotropySpec {
  std::vector<int> axes{0, 1, 2};
  Range factor{1.5, 4.0};
};

struct ElasticSpec {
  std::array<int, 3> grid{7, 7, 7};
  double max_displacement = 8.0;  // voxels
};

struct AffineSpec {
  Range scale{0.9, 1.1};
  Range rotation_deg{-10.0, 10.0};
  Range translation{-5.0, 5.0};  // voxels
};

struct AugmentSpec {
  std::uint64_t seed = 0;
  int n_outputs = 200;  // per domain
  NormalizationSpec normalization;
  AnisotropySpec anisotropy;
  ElasticSpec elastic;
  AffineSpec affine;
  AugmentMode mode = AugmentMode::one_of;
  std::vector<Family> families{Family::anisotropy, Family::elastic, Family::affine};
  int workers = 1;

  /// Appends "field: rule" messages for every violated invariant.
  void collect_violations(std::vector<std::string>& out, const std::string& prefix = "augment") const;
  void validate() const;
};

nlohmann::json to_json(const AugmentSpec& s);
AugmentSpec augment_spec_from_json(const nlohmann::json& j);

/// Percentile with linear interpolation between order statistics (p in [0, 100]).
double percentile(std::vector<float> values, double p);

/// Clips to the configured percentiles, then either standardizes (zscore) or
/// maps [lo, hi] onto [-1, 1] (rescale_unit). A constant volume becomes all
/// zeros with a warning.
Volume normalize(const Volume& v, const NormalizationSpec& spec);
inline Volume normalize(const Volume& v, const AugmentSpec& spec) { return normalize(v, spec.normalization); }

/// Box-filters `axis` down to round(n / factor) samples and linearly
/// resamples back to n.
Volume anisotropy_resample(const Volume& v, int axis, double factor);
std::pair<Volume, LabelMap> random_anisotropy(const Volume& v, const LabelMap& labels, const AnisotropySpec& spec,
                                              Rng& rng);

/// Displacements (in voxels) at a regular control grid; control point c of
/// axis a sits at c * (n_a - 1) / (grid_a - 1). Evaluated with a cubic
/// B-spline, so |displacement| never exceeds the largest control value.
struct DisplacementGrid {
  std::array<int, 3> grid{2, 2, 2};
  std::vector<std::array<double, 3>> values;  // x fastest

  [[nodiscard]] std::array<double, 3> at(const Dims& dims, double x, double y, double z) const;
};

/// Throws ValidationError unless max displacement < half the smallest control spacing.
void check_fold_over(const ElasticSpec& spec, const Dims& dims);
DisplacementGrid random_displacement_grid(const ElasticSpec& spec, Rng& rng);
/// Warps the volume (linear, volume minimum outside) and the labels
/// (nearest, 0 outside) with the same field.
std::pair<Volume, LabelMap> elastic_warp(const Volume& v, const LabelMap& labels, const DisplacementGrid& field);
std::pair<Volume, LabelMap> random_elastic(const Volume& v, const LabelMap& labels, const ElasticSpec& spec, Rng& rng);

struct AffineParams {
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  std::array<double, 3> rotation_deg{0.0, 0.0, 0.0};  // about x, y, z
  std::array<double, 3> translation{0.0, 0.0, 0.0};

  /// Linear part R_z R_y R_x S.
  [[nodiscard]] Eigen::Matrix3d matrix() const;
};

/// Maps voxel p to M (p - c) + c + t, c the volume center. Outside voxels get
/// the volume minimum (intensity) and 0 (labels).
std::pair<Volume, LabelMap> affine_warp(const Volume& v, const LabelMap& labels, const AffineParams& params);
AffineParams random_affine_params(const AffineSpec& spec, Rng& rng);
std::pair<Volume, LabelMap> random_affine(const Volume& v, const LabelMap& labels, const AffineSpec& spec, Rng& rng);

struct AugmentRecord {
  int index = 0;  // within its domain
  Domain domain = Domain::A;
  std::string source_id;
  std::vector<Family> families;
  std::uint64_t stream_seed = 0;
};

/// Output `index` of domain `d`: source sources[index % size], stream
/// derive_seed(seed, {d, index}).
Sample augment_output(const std::vector<const Sample*>& sources, const AugmentSpec& spec, Domain d, int index,
                      AugmentRecord* record = nullptr);

/// Produces spec.n_outputs augmented samples for every domain present in
/// `samples`. Sources are taken round-robin within a domain; output i of
/// domain d draws from Rng(derive_seed(seed, {d, i})), so results do not
/// depend on the worker count.
std::vector<Sample> generate_augmented_set(const std::vector<Sample>& samples, const AugmentSpec& spec,
                                           std::vector<AugmentRecord>* records = nullptr);

/// Writes <dir>/<domain>/<index>_{img,lbl}.nii.gz.
void write_augmented_sample(const std::filesystem::path& dir, const Sample& sample, const AugmentRecord& record);
/// Writes <dir>/manifest.json: seed, spec and the source of every output.
void write_augment_manifest(const std::filesystem::path& dir, const std::vector<AugmentRecord>& records,
                            const AugmentSpec& spec);
/// Both of the above for a whole set.
void write_augmented_set(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                         const std::vector<AugmentRecord>& records, const AugmentSpec& spec);

}  // namespace scgan
