#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scgan/augment.hpp"
#include "scgan/evaluation.hpp"
#include "scgan/losses.hpp"
#include "scgan/networks.hpp"
#include "scgan/pipeline.hpp"
#include "scgan/preprocess.hpp"

namespace scgan {

constexpr int kConfigVersion = 1;

/// Environment variable that overrides `output_dir`.
inline constexpr const char* kOutputDirEnv = "SCGAN_OUTPUT_DIR";

struct DomainConfig {
  std::string name;  // modality shown in reports, e.g. "CT"
  std::filesystem::path dir;
  std::string image_suffix = "_img.nii.gz";
  std::string label_suffix = "_lbl.nii.gz";
  bool reorient = true;
  std::optional<int> resize_xy;
  std::map<std::string, CropBox> crops;  // by scan id
};

inline DomainConfig named_domain(std::string name) {
  DomainConfig d;
  d.name = std::move(name);
  return d;
}

struct NetworkConfig {
  int base_filters = 16;
  NormKind norm = NormKind::instance;
};

struct PipelineConfig {
  int version = kConfigVersion;
  std::filesystem::path source;  // the config file; relative paths resolve against its directory
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "scgan_out";
  std::string run_name = "full";
  DomainConfig domain_a = named_domain("CT");
  DomainConfig domain_b = named_domain("MRI");
  std::string label_set_name = "default";
  LabelSet labels = default_label_set();
  double test_fraction = 0.2;
  AugmentSpec augment;
  NetworkConfig segmentor;
  NetworkConfig generator;
  NetworkConfig discriminator;
  LossWeights weights;
  DiceOptions dice;
  PhasePlan plan;
  AblationFlags flags;
  std::vector<EvalMode> eval_modes{EvalMode::four_label, EvalMode::seven_label};
  /// Not part of the file; set from the command line.
  bool resume = true;

  [[nodiscard]] const DomainConfig& domain(Domain d) const { return d == Domain::A ? domain_a : domain_b; }
};

/// Parses a config document. Every problem found (wrong types, unknown
/// enum values, violated invariants, missing paths) is appended to
/// `violations` as "field: rule"; parsing continues past errors.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& source,
                            std::vector<std::string>& violations);

/// Violations of a config file; empty iff it is valid. Throws
/// ValidationError when the file cannot be read or parsed as JSON.
std::vector<std::string> validate_config(const std::filesystem::path& path);

/// Loads and validates; throws ValidationError listing every violation.
/// Applies the SCGAN_OUTPUT_DIR override.
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const PipelineConfig& c);

TrainingSetup training_setup(const PipelineConfig& c);

}  // namespace scgan
