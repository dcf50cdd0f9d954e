#include "promptlens/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>

#include "promptlens/csv.hpp"
#include "promptlens/error.hpp"
#include "promptlens/format.hpp"

namespace promptlens {

using nlohmann::json;

namespace {

void require_finite(const json& j, const std::string& where) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    throw InvalidArgument("non-finite number at " + where);
  }
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) require_finite(value, where + "." + key);
  } else if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) require_finite(j[k], where + "[" + std::to_string(k) + "]");
  }
}

json optional_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (!std::isfinite(*v)) throw InvalidArgument("non-finite value in report");
  return *v;
}

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string aggregation_name(Aggregation a) {
  return a == Aggregation::kPaired ? "paired" : "mean_baseline";
}

Aggregation aggregation_from(const std::string& s) {
  if (s == "paired") return Aggregation::kPaired;
  if (s == "mean_baseline") return Aggregation::kMeanBaseline;
  throw ParseError("unknown aggregation '" + s + "'");
}

std::string granularity_name(Granularity g) { return g == Granularity::kWord ? "word" : "span"; }

Granularity granularity_from(const std::string& s) {
  if (s == "word") return Granularity::kWord;
  if (s == "span") return Granularity::kSpan;
  throw ParseError("unknown granularity '" + s + "'");
}

json samples_to_json(const ScoredSamples& s) {
  json scores = json::array();
  for (const auto& per_input : s.scores) {
    json samples = json::array();
    for (const auto& sv : per_input) {
      json values = json::array();
      for (const auto& v : sv.values) values.push_back(optional_number(v));
      samples.push_back(std::move(values));
    }
    scores.push_back(std::move(samples));
  }
  return {{"system_prompt", s.system_prompt},
          {"error", s.error ? json(*s.error) : json(nullptr)},
          {"scores", std::move(scores)}};
}

ScoredSamples samples_from_json(const json& j, const std::vector<std::string>& score_ids) {
  ScoredSamples s;
  s.system_prompt = j.at("system_prompt").get<std::string>();
  if (!j.at("error").is_null()) s.error = j.at("error").get<std::string>();
  for (const auto& per_input : j.at("scores")) {
    std::vector<ScoreVector> samples;
    for (const auto& values : per_input) {
      ScoreVector sv;
      sv.ids = score_ids;
      for (const auto& v : values) sv.values.push_back(number_or_null(v));
      if (sv.values.size() != score_ids.size()) throw ParseError("sample with wrong score count");
      samples.push_back(std::move(sv));
    }
    s.scores.push_back(std::move(samples));
  }
  return s;
}

json provenance_to_json(const ReportProvenance& p) {
  return {{"model_id", p.model_id},
          {"temperature", p.temperature},
          {"n", p.n},
          {"M", p.m},
          {"config_digest", p.config_digest},
          {"tool_version", p.tool_version},
          {"seed", p.seed ? json(*p.seed) : json(nullptr)},
          {"timestamp", p.timestamp}};
}

ReportProvenance provenance_from_json(const json& j) {
  ReportProvenance p;
  p.model_id = j.at("model_id").get<std::string>();
  p.temperature = j.at("temperature").get<double>();
  p.n = j.at("n").get<int>();
  p.m = j.at("M").get<std::size_t>();
  p.config_digest = j.at("config_digest").get<std::string>();
  p.tool_version = j.at("tool_version").get<std::string>();
  if (!j.at("seed").is_null()) p.seed = j.at("seed").get<std::uint64_t>();
  p.timestamp = j.at("timestamp").get<std::string>();
  return p;
}

void expect_kind(const ReportDocument& d, ReportKind kind) {
  if (d.kind != kind) {
    throw InvalidArgument("expected a " + to_string(kind) + " document, got " + to_string(d.kind));
  }
}

template <typename Fn>
auto parse_payload(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed payload: ") + e.what());
  }
}

std::string temp_name(const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  std::ostringstream os;
  os << path.filename().string() << ".tmp." << counter.fetch_add(1) << "." << std::random_device{}();
  return os.str();
}

// Display columns of UTF-8 text, one per code point.
std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (const char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string elide(std::string_view s, std::size_t width) {
  if (display_width(s) <= width) return std::string(s);
  if (width == 0) return {};
  std::string out;
  std::size_t cps = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto u = static_cast<unsigned char>(s[i]);
    if ((u & 0xC0) != 0x80) {
      if (cps == width - 1) break;
      ++cps;
    }
    out.push_back(s[i]);
  }
  return out + "…";
}

std::string flatten_whitespace(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return out;
}

std::string pad_left(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : std::string(width - w, ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20 && c != '\t' && c != '\n' && c != '\r') {
          out.push_back(' ');
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

std::string px(double v) { return format_fixed(v, 2); }

int tick_precision(double range) {
  if (!(range > 0.0)) return 2;
  return std::clamp(2 - static_cast<int>(std::floor(std::log10(range))), 0, 6);
}

std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const auto channel = [t](int from, int to) {
    return static_cast<int>(std::lround(from + (to - from) * t));
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(0xff, 0x08), channel(0xff, 0x30),
                channel(0xff, 0x6b));
  return buf;
}

}  // namespace

std::string to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::kImportanceMatrix: return "importance_matrix";
    case ReportKind::kExperimentRecords: return "experiment_records";
    case ReportKind::kExperimentSummary: return "experiment_summary";
  }
  return "unknown";
}

ReportKind report_kind_from_string(std::string_view name) {
  if (name == "importance_matrix") return ReportKind::kImportanceMatrix;
  if (name == "experiment_records") return ReportKind::kExperimentRecords;
  if (name == "experiment_summary") return ReportKind::kExperimentSummary;
  throw ParseError("unknown report kind '" + std::string(name) + "'");
}

std::string serialize(const ReportDocument& document) {
  require_finite(document.payload, "payload");
  if (!std::isfinite(document.provenance.temperature)) {
    throw InvalidArgument("non-finite temperature in provenance");
  }
  const json j = {{"format", kReportFormat},
                  {"format_version", document.format_version},
                  {"kind", to_string(document.kind)},
                  {"provenance", provenance_to_json(document.provenance)},
                  {"payload", document.payload}};
  return j.dump(2) + "\n";
}

ReportDocument parse_document(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError("report is not valid JSON near byte " + std::to_string(offset) + " of " +
                         std::to_string(text.size()) + ": " + e.what(),
                     offset);
  }
  try {
    if (!j.is_object() || j.value("format", "") != kReportFormat) {
      throw ParseError("not a promptlens report (missing \"format\": \"promptlens-report\")");
    }
    ReportDocument d;
    d.format_version = j.at("format_version").get<int>();
    if (d.format_version > kReportFormatVersion) {
      throw UnsupportedVersion("report format_version " + std::to_string(d.format_version) +
                               " is newer than the supported version " +
                               std::to_string(kReportFormatVersion));
    }
    if (d.format_version < 1) throw ParseError("invalid format_version");
    d.kind = report_kind_from_string(j.at("kind").get<std::string>());
    d.provenance = provenance_from_json(j.at("provenance"));
    d.payload = j.at("payload");
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.parent_path() / temp_name(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot write " + path.string());
  }
}

void export_document(const ReportDocument& document, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(document));
}

ReportDocument import_document(const std::filesystem::path& path) {
  return parse_document(read_text_file(path));
}

ReportDocument matrix_document(const ImportanceMatrix& matrix, std::optional<std::uint64_t> seed) {
  json tokens = json::array();
  for (const auto& t : matrix.tokens) {
    tokens.push_back({{"index", t.index},
                      {"text", t.text},
                      {"begin", t.span.begin},
                      {"end", t.span.end},
                      {"stopword", t.is_stopword}});
  }
  json units = json::array();
  for (std::size_t u = 0; u < matrix.rows(); ++u) {
    const MaskUnit& unit = matrix.units[u];
    json values = json::array();
    for (std::size_t c = 0; c < matrix.cols(); ++c) values.push_back(optional_number(matrix.cell(u, c)));
    units.push_back({{"label", unit.label},
                     {"tokens", {unit.tokens.begin, unit.tokens.end}},
                     {"stopword", unit.is_stopword},
                     {"masked_prompt", unit.masked_prompt},
                     {"values", std::move(values)}});
  }
  json variants = json::array();
  for (const auto& v : matrix.variants) variants.push_back(samples_to_json(v));

  ReportDocument d;
  d.kind = ReportKind::kImportanceMatrix;
  d.payload = {{"prompt_id", matrix.prompt_id},
               {"system_prompt", matrix.system_prompt},
               {"user_inputs", matrix.user_inputs},
               {"score_ids", matrix.score_ids},
               {"n", matrix.n},
               {"aggregation", aggregation_name(matrix.aggregation)},
               {"granularity", granularity_name(matrix.granularity)},
               {"glyph", matrix.glyph},
               {"partial", matrix.partial},
               {"provider_calls", matrix.provider_calls},
               {"tokens", std::move(tokens)},
               {"units", std::move(units)},
               {"baseline", samples_to_json(matrix.baseline)},
               {"variants", std::move(variants)}};
  const Provenance& p = matrix.provenance;
  d.provenance = {p.model_id, p.temperature, matrix.n, matrix.user_inputs.size(),
                  p.config_digest, p.tool_version, seed, p.timestamp};
  return d;
}

ImportanceMatrix matrix_from_document(const ReportDocument& document) {
  expect_kind(document, ReportKind::kImportanceMatrix);
  return parse_payload([&] {
    const json& j = document.payload;
    ImportanceMatrix m;
    m.prompt_id = j.at("prompt_id").get<std::string>();
    m.system_prompt = j.at("system_prompt").get<std::string>();
    m.user_inputs = j.at("user_inputs").get<std::vector<std::string>>();
    m.score_ids = j.at("score_ids").get<std::vector<std::string>>();
    m.n = j.at("n").get<int>();
    m.aggregation = aggregation_from(j.at("aggregation").get<std::string>());
    m.granularity = granularity_from(j.at("granularity").get<std::string>());
    m.glyph = j.at("glyph").get<std::string>();
    m.partial = j.at("partial").get<bool>();
    m.provider_calls = j.at("provider_calls").get<std::size_t>();
    for (const auto& t : j.at("tokens")) {
      m.tokens.push_back({t.at("index").get<std::size_t>(), t.at("text").get<std::string>(),
                          {t.at("begin").get<std::size_t>(), t.at("end").get<std::size_t>()},
                          t.at("stopword").get<bool>()});
    }
    const auto& units = j.at("units");
    const auto rows = static_cast<Eigen::Index>(units.size());
    const auto cols = static_cast<Eigen::Index>(m.score_ids.size());
    m.values = MatrixXd::Zero(rows, cols);
    m.present = MaskXb::Constant(rows, cols, false);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const json& u = units[static_cast<std::size_t>(r)];
      const auto range = u.at("tokens").get<std::vector<std::size_t>>();
      if (range.size() != 2) throw ParseError("unit token range must have 2 entries");
      m.units.push_back({{range[0], range[1]},
                         u.at("label").get<std::string>(),
                         u.at("stopword").get<bool>(),
                         u.at("masked_prompt").get<std::string>()});
      const auto& values = u.at("values");
      if (values.size() != m.score_ids.size()) throw ParseError("unit with wrong value count");
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (const auto v = number_or_null(values[static_cast<std::size_t>(c)])) {
          m.values(r, c) = *v;
          m.present(r, c) = true;
        }
      }
    }
    m.baseline = samples_from_json(j.at("baseline"), m.score_ids);
    for (const auto& v : j.at("variants")) m.variants.push_back(samples_from_json(v, m.score_ids));
    const ReportProvenance& p = document.provenance;
    m.provenance = {p.model_id, p.temperature, p.timestamp, p.config_digest, p.tool_version};
    return m;
  });
}

ReportDocument records_document(const std::vector<SuffixExperimentRecord>& records,
                                ReportProvenance provenance) {
  json rows = json::array();
  for (const auto& r : records) {
    rows.push_back({{"prompt_id", r.prompt_id},
                    {"suffix_id", r.suffix_id},
                    {"score_id", r.score_id},
                    {"suffix_impact", r.suffix_impact},
                    {"max_word_importance", r.max_word_importance},
                    {"n", r.n},
                    {"M", r.m},
                    {"model_id", r.model_id},
                    {"designed", r.designed}});
  }
  ReportDocument d;
  d.kind = ReportKind::kExperimentRecords;
  d.payload = {{"records", std::move(rows)}};
  d.provenance = std::move(provenance);
  return d;
}

std::vector<SuffixExperimentRecord> records_from_document(const ReportDocument& document) {
  expect_kind(document, ReportKind::kExperimentRecords);
  return parse_payload([&] {
    std::vector<SuffixExperimentRecord> out;
    for (const auto& r : document.payload.at("records")) {
      SuffixExperimentRecord rec;
      rec.prompt_id = r.at("prompt_id").get<std::string>();
      rec.suffix_id = r.at("suffix_id").get<std::string>();
      rec.score_id = r.at("score_id").get<std::string>();
      rec.suffix_impact = r.at("suffix_impact").get<double>();
      rec.max_word_importance = r.at("max_word_importance").get<double>();
      rec.n = r.at("n").get<int>();
      rec.m = r.at("M").get<std::size_t>();
      rec.model_id = r.at("model_id").get<std::string>();
      rec.designed = r.at("designed").get<bool>();
      out.push_back(std::move(rec));
    }
    return out;
  });
}

ReportDocument summary_document(const ExperimentResult& result, ReportProvenance provenance) {
  json summaries = json::array();
  for (const auto& s : result.summaries) {
    summaries.push_back({{"suffix_id", s.suffix_id},
                         {"score_id", s.score_id},
                         {"designed", s.designed},
                         {"n_points", s.n_points},
                         {"r", optional_number(s.r)},
                         {"slope", s.slope},
                         {"intercept", s.intercept},
                         {"computable", s.computable},
                         {"reason", s.reason}});
  }
  json exclusions = json::array();
  for (const auto& e : result.exclusions) {
    exclusions.push_back({{"prompt_id", e.prompt_id}, {"suffix_id", e.suffix_id}, {"reason", e.reason}});
  }
  ReportDocument d;
  d.kind = ReportKind::kExperimentSummary;
  d.payload = {{"summaries", std::move(summaries)},
               {"exclusions", std::move(exclusions)},
               {"records", result.records.size()},
               {"provider_calls", result.provider_calls},
               {"partial", result.partial}};
  d.provenance = std::move(provenance);
  return d;
}

std::vector<CorrelationSummary> summaries_from_document(const ReportDocument& document) {
  expect_kind(document, ReportKind::kExperimentSummary);
  return parse_payload([&] {
    std::vector<CorrelationSummary> out;
    for (const auto& s : document.payload.at("summaries")) {
      CorrelationSummary c;
      c.suffix_id = s.at("suffix_id").get<std::string>();
      c.score_id = s.at("score_id").get<std::string>();
      c.designed = s.at("designed").get<bool>();
      c.n_points = s.at("n_points").get<std::size_t>();
      c.r = number_or_null(s.at("r"));
      c.slope = s.at("slope").get<double>();
      c.intercept = s.at("intercept").get<double>();
      c.computable = s.at("computable").get<bool>();
      c.reason = s.at("reason").get<std::string>();
      out.push_back(std::move(c));
    }
    return out;
  });
}

std::string records_csv(const std::vector<SuffixExperimentRecord>& records) {
  std::string out = csv_line({"prompt_id", "suffix_id", "score_id", "suffix_impact",
                              "max_word_importance", "n", "M", "model_id"});
  for (const auto& r : records) {
    out += csv_line({r.prompt_id, r.suffix_id, r.score_id, format_double(r.suffix_impact),
                     format_double(r.max_word_importance), std::to_string(r.n),
                     std::to_string(r.m), r.model_id});
  }
  return out;
}

std::string summaries_csv(const std::vector<CorrelationSummary>& summaries) {
  std::string out = csv_line({"suffix_id", "score_id", "designed", "n_points", "r", "slope",
                              "intercept", "computable", "reason"});
  for (const auto& s : summaries) {
    out += csv_line({s.suffix_id, s.score_id, s.designed ? "true" : "false",
                     std::to_string(s.n_points), s.r ? format_double(*s.r) : "",
                     s.computable ? format_double(s.slope) : "",
                     s.computable ? format_double(s.intercept) : "",
                     s.computable ? "true" : "false", s.reason});
  }
  return out;
}

std::string render_terminal(const ImportanceMatrix& matrix, const TerminalOptions& options) {
  constexpr std::size_t kMinWidth = 40;
  constexpr std::size_t kMaxHeader = 24;
  constexpr std::string_view kMissing = "—";
  const std::size_t width = std::max(options.width, kMinWidth);
  const int precision = std::clamp(options.precision, 0, 12);
  const std::size_t rows = matrix.rows();
  const std::size_t cols = matrix.cols();

  std::size_t label_width = 4;
  for (const auto& unit : matrix.units) {
    label_width = std::max(label_width, std::min(options.max_label, display_width(flatten_whitespace(unit.label))));
  }
  label_width = std::min(label_width, width / 3);
  const std::size_t label_col = label_width + 2;  // "~ " or "  " marker

  std::vector<std::vector<std::string>> cells(rows, std::vector<std::string>(cols));
  std::vector<std::size_t> col_width(cols);
  std::vector<std::string> headers(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    std::optional<double> best;
    std::optional<double> least;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto v = matrix.cell(r, c);
      if (!v) continue;
      if (!best || *v > *best) best = v;
      if (!least || *v < *least) least = v;
    }
    // A constant column has no maximum worth pointing at.
    if (best && *least == *best) best.reset();
    std::size_t w = 1;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto v = matrix.cell(r, c);
      std::string text = v ? format_fixed(*v, precision) : std::string(kMissing);
      text += (v && best && *v == *best) ? "*" : " ";
      w = std::max(w, display_width(text));
      cells[r][c] = std::move(text);
    }
    headers[c] = elide(matrix.score_ids[c], std::min(kMaxHeader, width - label_col - 2));
    col_width[c] = std::max(w, display_width(headers[c]) + 1);
  }

  std::size_t shown = 0;
  std::size_t used = label_col;
  while (shown < cols && used + 2 + col_width[shown] <= width) used += 2 + col_width[shown++];

  std::ostringstream os;
  os << elide(flatten_whitespace("prompt " + matrix.prompt_id + ": " + matrix.system_prompt), width)
     << "\n";
  std::string info = "n=" + std::to_string(matrix.n) + "  M=" + std::to_string(matrix.user_inputs.size()) +
                     "  aggregation=" + aggregation_name(matrix.aggregation) +
                     "  model=" + matrix.provenance.model_id + (matrix.partial ? "  PARTIAL" : "");
  os << elide(info, width) << "\n";

  std::string header = pad_right("  word", label_col);
  std::string rule(label_col, '-');
  for (std::size_t c = 0; c < shown; ++c) {
    header += "  " + pad_left(headers[c] + " ", col_width[c]);
    rule += "  " + std::string(col_width[c], '-');
  }
  os << header << "\n" << rule << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    const MaskUnit& unit = matrix.units[r];
    std::string line = (unit.is_stopword ? "~ " : "  ") +
                       pad_right(elide(flatten_whitespace(unit.label), label_width), label_width);
    for (std::size_t c = 0; c < shown; ++c) line += "  " + pad_left(cells[r][c], col_width[c]);
    os << line << "\n";
  }
  os << "~ stopword   * column maximum   " << kMissing << " missing\n";
  if (shown < cols) {
    os << "(" << cols - shown << " more column" << (cols - shown == 1 ? "" : "s")
       << " hidden; widen terminal)\n";
  }
  return os.str();
}

std::string score_unit(std::string_view score_id) {
  if (score_id == kWordCountId) return "words";
  if (score_id == kFleschId) return "reading-ease points";
  if (score_id.starts_with(kTopicSimilarityPrefix)) return "cosine similarity";
  return "score units";
}

std::string scatter_svg(const std::vector<SuffixExperimentRecord>& records,
                        const CorrelationSummary& summary) {
  if (records.size() < 2) throw InvalidArgument("scatter plot needs at least 2 records");
  for (const auto& r : records) {
    if (r.suffix_id != records.front().suffix_id || r.score_id != records.front().score_id) {
      throw InvalidArgument("scatter plot records must share one suffix and score");
    }
    if (!std::isfinite(r.suffix_impact) || !std::isfinite(r.max_word_importance)) {
      throw InvalidArgument("scatter plot record with non-finite value");
    }
  }
  constexpr double kW = 640, kH = 480, kLeft = 80, kRight = 30, kTop = 50, kBottom = 70;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;

  double lo = 0.0;
  double hi = 0.0;
  for (const auto& r : records) {
    lo = std::min({lo, r.suffix_impact, r.max_word_importance});
    hi = std::max({hi, r.suffix_impact, r.max_word_importance});
  }
  if (!(hi > lo)) hi = lo + 1.0;
  hi += 0.05 * (hi - lo);
  const auto sx = [&](double x) { return kLeft + (x - lo) / (hi - lo) * pw; };
  const auto sy = [&](double y) { return kTop + ph - (y - lo) / (hi - lo) * ph; };

  const std::string& score = records.front().score_id;
  const std::string unit = score_unit(score);
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << " " << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<defs><clipPath id=\"plot-area\"><rect x=\"" << px(kLeft) << "\" y=\"" << px(kTop)
     << "\" width=\"" << px(pw) << "\" height=\"" << px(ph) << "\"/></clipPath></defs>\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"#ffffff\"/>\n"
     << "<text class=\"title\" x=\"" << px(kW / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
     << xml_escape(records.front().suffix_id + " / " + score) << "</text>\n"
     << "<rect x=\"" << px(kLeft) << "\" y=\"" << px(kTop) << "\" width=\"" << px(pw)
     << "\" height=\"" << px(ph) << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  const int prec = tick_precision(hi - lo);
  for (int k = 0; k <= 5; ++k) {
    const double v = lo + (hi - lo) * k / 5.0;
    const std::string label = format_fixed(v, prec);
    os << "<line class=\"tick\" x1=\"" << px(sx(v)) << "\" y1=\"" << px(kTop + ph) << "\" x2=\""
       << px(sx(v)) << "\" y2=\"" << px(kTop + ph + 5) << "\" stroke=\"#333333\"/>"
       << "<text x=\"" << px(sx(v)) << "\" y=\"" << px(kTop + ph + 18)
       << "\" text-anchor=\"middle\">" << label << "</text>\n"
       << "<line class=\"tick\" x1=\"" << px(kLeft - 5) << "\" y1=\"" << px(sy(v)) << "\" x2=\""
       << px(kLeft) << "\" y2=\"" << px(sy(v)) << "\" stroke=\"#333333\"/>"
       << "<text x=\"" << px(kLeft - 8) << "\" y=\"" << px(sy(v) + 4)
       << "\" text-anchor=\"end\">" << label << "</text>\n";
  }
  os << "<text class=\"x-label\" x=\"" << px(kLeft + pw / 2) << "\" y=\"" << px(kH - 20)
     << "\" text-anchor=\"middle\">" << xml_escape("max word importance in suffix (" + unit + ")")
     << "</text>\n"
     << "<text class=\"y-label\" x=\"20\" y=\"" << px(kTop + ph / 2)
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << px(kTop + ph / 2) << ")\">"
     << xml_escape("suffix impact (" + unit + ")") << "</text>\n";

  os << "<line class=\"identity\" x1=\"" << px(sx(lo)) << "\" y1=\"" << px(sy(lo)) << "\" x2=\""
     << px(sx(hi)) << "\" y2=\"" << px(sy(hi))
     << "\" stroke=\"#999999\" stroke-dasharray=\"6 4\" clip-path=\"url(#plot-area)\"/>\n";
  if (summary.computable) {
    os << "<line class=\"fit\" x1=\"" << px(sx(lo)) << "\" y1=\""
       << px(sy(summary.slope * lo + summary.intercept)) << "\" x2=\"" << px(sx(hi)) << "\" y2=\""
       << px(sy(summary.slope * hi + summary.intercept))
       << "\" stroke=\"#d62728\" stroke-width=\"2\" clip-path=\"url(#plot-area)\"/>\n";
  }
  for (const auto& r : records) {
    os << "<circle class=\"point\" cx=\"" << px(sx(r.max_word_importance)) << "\" cy=\""
       << px(sy(r.suffix_impact)) << "\" r=\"4\" fill=\"#1f77b4\" fill-opacity=\"0.8\"><title>"
       << xml_escape(r.prompt_id) << "</title></circle>\n";
  }
  const std::string r_text = summary.r ? "r = " + format_fixed(*summary.r, 2) : "r = n/a";
  os << "<text class=\"r\" x=\"" << px(kLeft + 10) << "\" y=\"" << px(kTop + 18)
     << "\" font-size=\"14\">" << r_text << " (n = " << records.size() << ")</text>\n"
     << "</svg>\n";
  return os.str();
}

void plot_scatter(const std::vector<SuffixExperimentRecord>& records,
                  const CorrelationSummary& summary, const std::filesystem::path& path) {
  write_file_atomic(path, scatter_svg(records, summary));
}

std::string heatmap_svg(const std::vector<std::string>& labels_x,
                        const std::vector<std::string>& labels_y, const MatrixXd& values,
                        const std::optional<MaskXb>& present, const HeatmapOptions& options) {
  if (values.rows() == 0 || values.cols() == 0) throw InvalidArgument("heatmap: empty grid");
  if (static_cast<std::size_t>(values.cols()) != labels_x.size() ||
      static_cast<std::size_t>(values.rows()) != labels_y.size()) {
    throw InvalidArgument("heatmap: grid is " + std::to_string(values.rows()) + "x" +
                          std::to_string(values.cols()) + " but labels are " +
                          std::to_string(labels_y.size()) + "x" + std::to_string(labels_x.size()));
  }
  if (present && (present->rows() != values.rows() || present->cols() != values.cols())) {
    throw InvalidArgument("heatmap: mask shape differs from grid");
  }
  const auto is_present = [&](Eigen::Index r, Eigen::Index c) { return !present || (*present)(r, c); };
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (is_present(r, c) && !std::isfinite(values(r, c))) {
        throw InvalidArgument("heatmap: non-finite value at (" + std::to_string(r) + ", " +
                              std::to_string(c) + ")");
      }
    }
  }

  const auto range_of = [&](Eigen::Index c0, Eigen::Index c1) {
    std::optional<std::pair<double, double>> range;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      for (Eigen::Index c = c0; c < c1; ++c) {
        if (!is_present(r, c)) continue;
        const double v = values(r, c);
        if (!range) range = std::pair{v, v};
        range->first = std::min(range->first, v);
        range->second = std::max(range->second, v);
      }
    }
    return range;
  };
  const auto global = range_of(0, values.cols());
  const auto level = [&](Eigen::Index r, Eigen::Index c) {
    const auto range = options.normalize_columns ? range_of(c, c + 1) : global;
    if (!range || !(range->second > range->first)) return 0.0;
    return (values(r, c) - range->first) / (range->second - range->first);
  };

  constexpr double kCellW = 72, kCellH = 28, kChar = 7;
  std::size_t max_y = 0;
  std::size_t max_x = 0;
  for (const auto& l : labels_y) max_y = std::max(max_y, std::min<std::size_t>(display_width(l), 40));
  for (const auto& l : labels_x) max_x = std::max(max_x, std::min<std::size_t>(display_width(l), 40));
  const double left = 16 + kChar * static_cast<double>(max_y);
  const double top = (options.title.empty() ? 16 : 40) + kChar * 0.75 * static_cast<double>(max_x);
  const double width = left + kCellW * static_cast<double>(values.cols()) + 20;
  const double height = top + kCellH * static_cast<double>(values.rows()) + 20;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width) << "\" height=\""
     << px(height) << "\" viewBox=\"0 0 " << px(width) << " " << px(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << px(width) << "\" height=\"" << px(height)
     << "\" fill=\"#ffffff\"/>\n";
  if (!options.title.empty()) {
    os << "<text class=\"title\" x=\"" << px(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << xml_escape(options.title) << "</text>\n";
  }
  for (std::size_t c = 0; c < labels_x.size(); ++c) {
    const double x = left + kCellW * (static_cast<double>(c) + 0.5);
    const double y = top - 6;
    os << "<text class=\"x-label\" x=\"" << px(x) << "\" y=\"" << px(y)
       << "\" transform=\"rotate(-45 " << px(x) << " " << px(y) << ")\">"
       << xml_escape(elide(labels_x[c], 40)) << "</text>\n";
  }
  for (std::size_t r = 0; r < labels_y.size(); ++r) {
    os << "<text class=\"y-label\" x=\"" << px(left - 6) << "\" y=\""
       << px(top + kCellH * (static_cast<double>(r) + 0.5) + 4) << "\" text-anchor=\"end\">"
       << xml_escape(elide(flatten_whitespace(labels_y[r]), 40)) << "</text>\n";
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double x = left + kCellW * static_cast<double>(c);
      const double y = top + kCellH * static_cast<double>(r);
      const bool has = is_present(r, c);
      const double t = has ? level(r, c) : 0.0;
      os << "<rect class=\"cell\" x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(kCellW)
         << "\" height=\"" << px(kCellH) << "\" fill=\"" << (has ? ramp_color(t) : "#d9d9d9")
         << "\" stroke=\"#ffffff\"/>"
         << "<text class=\"value\" x=\"" << px(x + kCellW / 2) << "\" y=\"" << px(y + kCellH / 2 + 4)
         << "\" text-anchor=\"middle\" fill=\"" << (t > 0.55 ? "#ffffff" : "#000000") << "\">"
         << (has ? format_fixed(values(r, c), options.precision) : "—") << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void plot_heatmap(const std::vector<std::string>& labels_x,
                  const std::vector<std::string>& labels_y, const MatrixXd& values,
                  const std::filesystem::path& path, const std::optional<MaskXb>& present,
                  const HeatmapOptions& options) {
  write_file_atomic(path, heatmap_svg(labels_x, labels_y, values, present, options));
}

std::string matrix_heatmap_svg(const ImportanceMatrix& matrix) {
  std::vector<std::string> labels;
  for (const auto& unit : matrix.units) labels.push_back((unit.is_stopword ? "~ " : "") + unit.label);
  HeatmapOptions options;
  options.title = "word importance: " + matrix.prompt_id;
  options.normalize_columns = true;
  options.precision = 3;
  return heatmap_svg(matrix.score_ids, labels, matrix.values, matrix.present, options);
}

}  // namespace promptlens
