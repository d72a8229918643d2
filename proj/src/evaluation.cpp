#include "scgan/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace scgan {

namespace {

const std::vector<std::string> kFour{"AA", "LAC", "LVC", "MYO"};
const std::vector<std::string> kSeven{"AA", "LAC", "LVC", "MYO", "RAC", "RVC", "PA"};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(EvalMode m) { return m == EvalMode::four_label ? "four_label" : "seven_label"; }

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "four_label") return EvalMode::four_label;
  if (s == "seven_label") return EvalMode::seven_label;
  throw ValidationError("unknown evaluation mode '" + s + "' (expected four_label or seven_label)");
}

const std::vector<std::string>& mode_labels(EvalMode m) { return m == EvalMode::four_label ? kFour : kSeven; }

double dice_coefficient(const LabelMap& pred, const LabelMap& truth, std::int32_t label) {
  if (pred.dims != truth.dims)
    throw ShapeError("prediction " + pred.dims.str() + " and truth " + truth.dims.str() + " differ in shape");
  std::size_t p = 0;
  std::size_t t = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] == label;
    const bool b = truth.data[i] == label;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

double DiceReport::at(const std::string& label) const {
  for (const auto& [name, v] : per_label)
    if (name == label) return v;
  throw ValidationError("report has no label " + label);
}

DiceReport evaluate(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& truth, EvalMode mode,
                    const std::string& domain, const std::string& name) {
  if (pred.size() != truth.size())
    throw ValidationError("unmatched samples: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(truth.size()) + " ground truths");
  if (truth.empty()) throw ValidationError("nothing to evaluate");

  DiceReport r;
  r.name = name;
  r.domain = domain;
  r.mode = mode;
  r.n_samples = static_cast<int>(truth.size());
  for (const auto& label : mode_labels(mode)) {
    double sum = 0.0;
    for (std::size_t s = 0; s < truth.size(); ++s) {
      const auto& set = truth[s].label_set;
      const auto it = std::find_if(set.begin(), set.end(), [&](const LabelInfo& l) { return l.name == label; });
      if (it == set.end())
        throw ValidationError("label " + label + " required by " + to_string(mode) + " is missing from sample " +
                              std::to_string(s));
      sum += dice_coefficient(pred[s], truth[s], it->id);
    }
    r.per_label.emplace_back(label, sum / static_cast<double>(truth.size()));
  }
  double total = 0.0;
  for (const auto& [_, v] : r.per_label) total += v;
  r.mean = total / static_cast<double>(r.per_label.size());
  return r;
}

ReportTable report_table(const std::vector<DiceReport>& reports) {
  if (reports.empty()) throw ValidationError("report table needs at least one report");
  bool seven = false;
  for (const auto& r : reports) seven = seven || r.mode == EvalMode::seven_label;
  const auto& columns = mode_labels(seven ? EvalMode::seven_label : EvalMode::four_label);

  auto cell = [](const DiceReport& r, const std::string& label) -> const double* {
    for (const auto& p : r.per_label)
      if (p.first == label) return &p.second;
    return nullptr;
  };

  ReportTable t;
  std::ostringstream csv;
  csv << "name,domain,mode,n_samples";
  for (const auto& c : columns) csv << "," << c;
  csv << ",mean\n";

  std::ostringstream txt;
  std::size_t name_w = 4;
  for (const auto& r : reports) name_w = std::max(name_w, r.name.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  txt << pad("name", name_w) << "  " << pad("domain", 6) << "  " << pad("mode", 11);
  for (const auto& c : columns) txt << "  " << pad(c, 5);
  txt << "  mean\n";

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    csv << r.name << "," << r.domain << "," << to_string(r.mode) << "," << r.n_samples;
    txt << pad(r.name, name_w) << "  " << pad(r.domain, 6) << "  " << pad(to_string(r.mode), 11);
    nlohmann::json per = nlohmann::json::object();
    for (const auto& c : columns) {
      const double* v = cell(r, c);
      csv << "," << (v ? fmt("%.17g", *v) : "");
      txt << "  " << pad(v ? fmt("%.3f", *v) : "-", 5);
    }
    for (const auto& [label, v] : r.per_label) per[label] = v;
    csv << "," << fmt("%.17g", r.mean) << "\n";
    txt << "  " << fmt("%.3f", r.mean) << "\n";
    rows.push_back({{"name", r.name},
                    {"domain", r.domain},
                    {"mode", to_string(r.mode)},
                    {"n_samples", r.n_samples},
                    {"per_label", per},
                    {"label_order", mode_labels(r.mode)},
                    {"mean", r.mean}});
  }
  t.csv = csv.str();
  t.text = txt.str();
  t.json = {{"reports", rows}};
  return t;
}

std::vector<DiceReport> parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty report CSV");
  const auto header = split(line, ',');
  if (header.size() < 6 || header[0] != "name" || header.back() != "mean")
    throw ValidationError("unrecognized report CSV header");
  std::vector<DiceReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) throw ValidationError("report CSV row has the wrong number of fields");
    DiceReport r;
    r.name = f[0];
    r.domain = f[1];
    r.mode = parse_eval_mode(f[2]);
    r.n_samples = std::stoi(f[3]);
    for (std::size_t c = 4; c + 1 < f.size(); ++c)
      if (!f[c].empty()) r.per_label.emplace_back(header[c], std::stod(f[c]));
    r.mean = std::stod(f.back());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace scgan
