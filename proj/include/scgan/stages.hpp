#pragma once

#include <optional>
#include <vector>

#include "scgan/config.hpp"
#include "scgan/evaluation.hpp"
#include "scgan/phantom.hpp"

namespace scgan {

/// File-based pipeline stages. Each reads the artifacts of earlier stages
/// from the output directory and writes its own, so every stage can be
/// rerun on its own.

/// Reorients, crops, optionally resizes, and splits into train/test.
void stage_preprocess(const PipelineConfig& c);
void stage_augment(const PipelineConfig& c);
void stage_train_seg(const PipelineConfig& c);
void stage_train_gan(const PipelineConfig& c);
void stage_synthesize(const PipelineConfig& c);
void stage_train_final(const PipelineConfig& c);
/// Reports for each configured mode (or `modes` when given) and domain,
/// written to reports/dice.{csv,json,txt}.
std::vector<DiceReport> stage_evaluate(const PipelineConfig& c, const std::optional<std::vector<EvalMode>>& modes = {});
/// All stages in order, honoring the ablation flags.
std::vector<DiceReport> stage_run_all(const PipelineConfig& c);

/// Train or test split of the preprocessed data, loaded lazily from disk.
DomainPools load_preprocessed(const PipelineConfig& c, const std::string& split);

struct PhantomSetSpec {
  int count = 4;  // per domain
  Dims shape{32, 32, 32};
  int n_labels = 7;
  std::uint64_t seed = 0;
  /// Same geometry seeds for both domains (otherwise the domains are unpaired).
  bool paired = false;
};

/// Writes <dir>/A (pseudo-CT) and <dir>/B (pseudo-MRI) as <i>_{img,lbl}.nii.gz plus manifest.json.
void write_phantom_set(const std::filesystem::path& dir, const PhantomSetSpec& spec);

}  // namespace scgan
