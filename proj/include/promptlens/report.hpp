#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptlens/experiment.hpp"
#include "promptlens/importance.hpp"
#include "promptlens/types.hpp"

namespace promptlens {

inline constexpr int kReportFormatVersion = 1;
inline constexpr std::string_view kReportFormat = "promptlens-report";

enum class ReportKind { kImportanceMatrix, kExperimentRecords, kExperimentSummary };

std::string to_string(ReportKind kind);
ReportKind report_kind_from_string(std::string_view name);

struct ReportProvenance {
  std::string model_id;
  double temperature = 1.0;
  int n = 0;
  std::size_t m = 0;
  std::string config_digest;
  std::string tool_version;
  std::optional<std::uint64_t> seed;
  std::string timestamp;

  bool operator==(const ReportProvenance&) const = default;
};

/// A versioned, self-describing export:
/// {"format": "promptlens-report", "format_version": 1, "kind": ..., "provenance": {...},
///  "payload": {...}}.
struct ReportDocument {
  int format_version = kReportFormatVersion;
  ReportKind kind = ReportKind::kImportanceMatrix;
  nlohmann::json payload;
  ReportProvenance provenance;

  bool operator==(const ReportDocument&) const = default;
};

/// Throws InvalidArgument when the payload holds a non-finite number.
std::string serialize(const ReportDocument& document);

/// Throws ParseError (offset = byte where parsing failed) on malformed text or a missing
/// field, and UnsupportedVersion when format_version is newer than this build.
ReportDocument parse_document(std::string_view text);

void export_document(const ReportDocument& document, const std::filesystem::path& path);
ReportDocument import_document(const std::filesystem::path& path);

/// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

ReportDocument matrix_document(const ImportanceMatrix& matrix, std::optional<std::uint64_t> seed = {});
ImportanceMatrix matrix_from_document(const ReportDocument& document);

ReportDocument records_document(const std::vector<SuffixExperimentRecord>& records,
                                ReportProvenance provenance);
std::vector<SuffixExperimentRecord> records_from_document(const ReportDocument& document);

ReportDocument summary_document(const ExperimentResult& result, ReportProvenance provenance);
std::vector<CorrelationSummary> summaries_from_document(const ReportDocument& document);

/// prompt_id,suffix_id,score_id,suffix_impact,max_word_importance,n,M,model_id
/// Numbers use the shortest text that parses back to the same double.
std::string records_csv(const std::vector<SuffixExperimentRecord>& records);

/// suffix_id,score_id,designed,n_points,r,slope,intercept,computable,reason
std::string summaries_csv(const std::vector<CorrelationSummary>& summaries);

struct TerminalOptions {
  int precision = 3;
  std::size_t width = 100;      // upper bound on every output line, in columns
  std::size_t max_label = 24;   // longer words are cut and end in "…"
};

/// Fixed-width table: one row per mask unit, one column per score.
///
/// Stopword rows start with "~", the largest value of each column ends in "*" (unless the
/// column is constant), missing cells show "—". Score columns that do not fit the width
/// are left out and counted in a closing note.
std::string render_terminal(const ImportanceMatrix& matrix, const TerminalOptions& options = {});

/// Axis unit for a score id ("words", "reading-ease points", "cosine similarity").
std::string score_unit(std::string_view score_id);

/// Scatter of (max_word_importance, suffix_impact) with the OLS line, the y = x line and
/// an "r = x.xx" label. Both axes share one range. Throws InvalidArgument on fewer than
/// two records or records from several (suffix, score) pairs.
std::string scatter_svg(const std::vector<SuffixExperimentRecord>& records,
                        const CorrelationSummary& summary);
void plot_scatter(const std::vector<SuffixExperimentRecord>& records,
                  const CorrelationSummary& summary, const std::filesystem::path& path);

struct HeatmapOptions {
  std::string title;
  int precision = 2;
  /// Scale each column to its own range (for grids mixing scores of different units).
  bool normalize_columns = false;
};

/// Grid of values[row, col] with rows labeled by labels_y and columns by labels_x.
///
/// Colors run linearly from white (#ffffff, lowest) to dark blue (#08306b, highest);
/// every cell carries its value as text. Cells with present(row, col) false are grey and
/// show "—". Throws InvalidArgument on an empty grid, mismatched labels, or a non-finite
/// present value.
std::string heatmap_svg(const std::vector<std::string>& labels_x,
                        const std::vector<std::string>& labels_y, const MatrixXd& values,
                        const std::optional<MaskXb>& present = {},
                        const HeatmapOptions& options = {});
void plot_heatmap(const std::vector<std::string>& labels_x,
                  const std::vector<std::string>& labels_y, const MatrixXd& values,
                  const std::filesystem::path& path, const std::optional<MaskXb>& present = {},
                  const HeatmapOptions& options = {});

/// Word x score heatmap of an importance matrix, columns normalized separately.
std::string matrix_heatmap_svg(const ImportanceMatrix& matrix);

}  // namespace promptlens
