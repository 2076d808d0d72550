#include "ulfine/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ulfine/error.hpp"
#include "ulfine/fusion.hpp"

namespace ulfine {

using nlohmann::ordered_json;

void GroupSpec::validate() const {
  if (head_min <= tail_max) throw ConfigError("metrics: head_min must exceed tail_max");
}

ClassGroup group_of(std::size_t labeled_count, const GroupSpec& spec) {
  if (labeled_count >= spec.head_min) return ClassGroup::kHead;
  if (labeled_count <= spec.tail_max) return ClassGroup::kTail;
  return ClassGroup::kMedium;
}

GroupAccuracy group_accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> truths,
                             std::span<const std::size_t> labeled_counts, const GroupSpec& spec) {
  if (predictions.size() != truths.size()) throw DimensionError("group_accuracy: prediction/truth length mismatch");
  const std::size_t classes = labeled_counts.size();
  std::vector<std::size_t> hits(classes, 0);
  std::vector<std::size_t> totals(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= classes) throw DimensionError("group_accuracy: truth label out of range");
    ++totals[truths[i]];
    if (predictions[i] == truths[i]) {
      ++hits[truths[i]];
      ++correct;
    }
  }
  GroupAccuracy out;
  out.overall = truths.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truths.size());
  out.per_class.resize(classes);
  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t members[3] = {0, 0, 0};
  for (std::size_t k = 0; k < classes; ++k) {
    if (totals[k] == 0) continue;
    const double acc = static_cast<double>(hits[k]) / static_cast<double>(totals[k]);
    out.per_class[k] = acc;
    const auto g = static_cast<std::size_t>(group_of(labeled_counts[k], spec));
    sums[g] += acc;
    ++members[g];
  }
  auto mean = [&](std::size_t g) -> std::optional<double> {
    if (members[g] == 0) return std::nullopt;
    return sums[g] / static_cast<double>(members[g]);
  };
  out.head = mean(0);
  out.medium = mean(1);
  out.tail = mean(2);
  return out;
}

double classification_stability(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("classification_stability: empty input");
  const double n = static_cast<double>(p.size());
  double mean = 0.0;
  for (double v : p) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : p) var += (v - mean) * (v - mean);
  return 1.0 - std::sqrt(var / n);
}

StabilityMode parse_stability_mode(const std::string& name) {
  if (name == "probability") return StabilityMode::kProbability;
  if (name == "indicator") return StabilityMode::kIndicator;
  throw ConfigError("unknown stability mode '" + name + "' (expected probability|indicator)");
}

std::string to_string(StabilityMode mode) {
  return mode == StabilityMode::kProbability ? "probability" : "indicator";
}

std::vector<double> true_class_scores(const Matrix& logits, std::span<const std::uint32_t> truths, StabilityMode mode) {
  std::vector<double> out(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (mode == StabilityMode::kProbability) {
      out[i] = softmax(logits.row(i))[truths[i]];
    } else {
      out[i] = pseudo_label(logits.row(i)).label == truths[i] ? 1.0 : 0.0;
    }
  }
  return out;
}

PseudoLabelStats pseudo_label_stats(std::span<const std::uint32_t> pseudo_labels, std::span<const double> confidences,
                                    std::span<const std::uint32_t> truths, const std::vector<bool>& mask,
                                    std::size_t classes) {
  PseudoLabelStats s;
  s.histogram.assign(classes, 0);
  double false_conf = 0.0;
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i) {
    if (!mask[i]) continue;
    ++s.masked_in;
    ++s.histogram[pseudo_labels[i]];
    if (pseudo_labels[i] != truths[i]) {
      ++s.false_count;
      false_conf += confidences[i];
    }
  }
  if (s.false_count > 0) s.mean_false_confidence = false_conf / static_cast<double>(s.false_count);
  return s;
}

namespace {

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> optional_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

}  // namespace

std::string to_jsonl_line(const RunReport& r) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["arm"] = r.arm;
  j["seed"] = r.seed;
  j["iteration"] = r.iteration;
  j["overall_accuracy"] = r.overall_accuracy;
  j["head_accuracy"] = optional_json(r.head_accuracy);
  j["medium_accuracy"] = optional_json(r.medium_accuracy);
  j["tail_accuracy"] = optional_json(r.tail_accuracy);
  j["stability"] = r.stability;
  j["pseudo_label_histogram"] = r.pseudo_label_histogram;
  j["masked_in"] = r.masked_in;
  j["false_pseudo_labels"] = r.false_pseudo_labels;
  j["mean_false_confidence"] = r.mean_false_confidence;
  j["mask_pass_rate"] = r.mask_pass_rate;
  j["loss"] = {{"labeled", r.loss.labeled},
               {"unlabeled", r.loss.unlabeled},
               {"orthogonal", r.loss.orthogonal},
               {"orthogonal_weight", r.loss.orthogonal_weight},
               {"total", r.loss.total}};
  j["config"] = r.config;
  return j.dump();
}

RunReport parse_jsonl_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(std::string("report line is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw FormatError("unsupported report schema version");
    RunReport r;
    r.arm = j.at("arm").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.iteration = j.at("iteration").get<std::uint64_t>();
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    r.head_accuracy = optional_from(j.at("head_accuracy"));
    r.medium_accuracy = optional_from(j.at("medium_accuracy"));
    r.tail_accuracy = optional_from(j.at("tail_accuracy"));
    r.stability = j.at("stability").get<double>();
    r.pseudo_label_histogram = j.at("pseudo_label_histogram").get<std::vector<std::size_t>>();
    r.masked_in = j.at("masked_in").get<std::size_t>();
    r.false_pseudo_labels = j.at("false_pseudo_labels").get<std::size_t>();
    r.mean_false_confidence = j.at("mean_false_confidence").get<double>();
    r.mask_pass_rate = j.at("mask_pass_rate").get<double>();
    const auto& loss = j.at("loss");
    r.loss.labeled = loss.at("labeled").get<double>();
    r.loss.unlabeled = loss.at("unlabeled").get<double>();
    r.loss.orthogonal = loss.at("orthogonal").get<double>();
    r.loss.orthogonal_weight = loss.at("orthogonal_weight").get<double>();
    r.loss.total = loss.at("total").get<double>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    return r;
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("report record is missing or mistypes a field: ") + e.what());
  }
}

std::string csv_header() {
  std::string h =
      "schema_version,arm,seed,iteration,overall_accuracy,head_accuracy,medium_accuracy,tail_accuracy,stability,"
      "masked_in,false_pseudo_labels,mean_false_confidence,mask_pass_rate,loss_labeled,loss_unlabeled,"
      "loss_orthogonal,loss_total,pseudo_label_histogram,config";
  return h;
}

std::string to_csv_row(const RunReport& r) {
  std::ostringstream os;
  os << kReportSchemaVersion << ',' << r.arm << ',' << r.seed << ',' << r.iteration << ',' << csv_number(r.overall_accuracy)
     << ',' << csv_optional(r.head_accuracy) << ',' << csv_optional(r.medium_accuracy) << ','
     << csv_optional(r.tail_accuracy) << ',' << csv_number(r.stability) << ',' << r.masked_in << ','
     << r.false_pseudo_labels << ',' << csv_number(r.mean_false_confidence) << ',' << csv_number(r.mask_pass_rate) << ','
     << csv_number(r.loss.labeled) << ',' << csv_number(r.loss.unlabeled) << ',' << csv_number(r.loss.orthogonal) << ','
     << csv_number(r.loss.total) << ',';
  for (std::size_t k = 0; k < r.pseudo_label_histogram.size(); ++k) {
    if (k) os << ';';
    os << r.pseudo_label_histogram[k];
  }
  os << ',';
  bool first = true;
  for (const auto& [key, value] : r.config) {
    if (!first) os << ';';
    first = false;
    os << key << '=' << value;
  }
  return os.str();
}

void emit_report(std::span<const RunReport> series, const std::filesystem::path& stem) {
  if (series.empty()) throw std::invalid_argument("emit_report: empty series");
  auto jsonl_path = stem;
  jsonl_path += ".jsonl";
  auto csv_path = stem;
  csv_path += ".csv";
  std::ofstream jsonl(jsonl_path, std::ios::trunc);
  if (!jsonl) throw std::runtime_error("cannot open '" + jsonl_path.string() + "' for writing");
  for (const auto& r : series) jsonl << to_jsonl_line(r) << '\n';
  if (!jsonl) throw std::runtime_error("write failed for '" + jsonl_path.string() + "'");
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open '" + csv_path.string() + "' for writing");
  csv << csv_header() << '\n';
  for (const auto& r : series) csv << to_csv_row(r) << '\n';
  if (!csv) throw std::runtime_error("write failed for '" + csv_path.string() + "'");
}

std::vector<RunReport> read_report_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::vector<RunReport> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(parse_jsonl_line(line));
  }
  return out;
}

}  // namespace ulfine
