#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scgan/volume.hpp"

namespace scgan {

enum class EvalMode { four_label, seven_label };

std::string to_string(EvalMode m);
EvalMode parse_eval_mode(const std::string& s);

/// Reported structure names: {AA, LAC, LVC, MYO}, plus {RAC, RVC, PA} in seven-label mode.
const std::vector<std::string>& mode_labels(EvalMode m);

/// 2|P ∩ T| / (|P| + |T|) for one label id; 1 when the label is absent from both.
double dice_coefficient(const LabelMap& pred, const LabelMap& truth, std::int32_t label);

struct DiceReport {
  std::string name;    // run name, e.g. "full" or "no_aug"
  std::string domain;  // configured modality name, e.g. "CT"
  EvalMode mode = EvalMode::four_label;
  int n_samples = 0;
  std::vector<std::pair<std::string, double>> per_label;
  double mean = 0.0;

  [[nodiscard]] double at(const std::string& label) const;
};

/// Dice per sample and label (label ids looked up by name in the truth label
/// set), averaged over samples per label; mean is the unweighted mean over labels.
DiceReport evaluate(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& truth, EvalMode mode,
                    const std::string& domain = "", const std::string& name = "");

struct ReportTable {
  std::string text;
  std::string csv;
  nlohmann::json json;
};

/// One row per report, one column per label (union over modes, fixed order)
/// plus the mean. Byte-stable for identical inputs.
ReportTable report_table(const std::vector<DiceReport>& reports);

/// Inverse of the CSV produced by report_table.
std::vector<DiceReport> parse_report_csv(const std::string& csv);

}  // namespace scgan
