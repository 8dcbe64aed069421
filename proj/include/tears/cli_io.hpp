#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "tears/ot_solver.hpp"
#include "tears/singularity_analyzer.hpp"
#include "tears/tear_extractor.hpp"

namespace tears {

inline constexpr int kScenarioVersion = 1;

// Invalid scenario text; `line` is 1-based (0 when unknown), `field` a JSON pointer.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& what, int line, std::string field)
      : std::runtime_error(what), line(line), field(std::move(field)) {}
  int line;
  std::string field;
};

struct Scenario {
  std::string name;
  std::string builtin;  // two-atoms, triangle, appendix, random-k-pieces, or empty for explicit measures
  int k = 3;             // random-k-pieces
  int per_piece = 3;
  double radius = 0.15;
  SourceMeasure mu;
  TargetDecomposition nu;
  std::vector<std::string> analyses;  // solve, tear, mult, stability, appendix
  int lattice = 129;
  double tol = 1e-10;
  std::uint64_t seed = 1;
  double eta = 0.02;
  double eps = 0.1;
  int seeds = 10;
  std::vector<int> stability_pieces;  // default: every piece
  std::vector<int> tear_pieces;       // default: the two pieces of a two-piece target
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> window;  // lattice box, must cover spt mu
};

// Resolution order: an existing file is parsed, otherwise the name must be a built-in.
Scenario load_scenario(const std::string& file_or_builtin);
Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>");
Scenario builtin_scenario(const std::string& name, std::uint64_t seed = 1, int k = 3);
const std::vector<std::string>& builtin_names();

struct RunResult {
  nlohmann::ordered_json report;
  bool pass = true;
  std::vector<std::string> failures;  // certificate names that failed
  std::vector<std::filesystem::path> files;
};

// Runs the requested analyses in dependency order and writes report.json plus CSV and SVG artifacts.
RunResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir);

// Lattice box used for fields over the source support.
Latticed scenario_lattice(const Scenario& scenario);

struct PlotOverlay {
  std::vector<Eigen::VectorXd> markers;
  const TargetDecomposition* pieces = nullptr;  // drawn in a side panel when set
};

// Region colouring by active piece; multiplicity >= 2 nodes overlaid as the coincidence set. 2D only.
std::string field_svg(const MultiplicityField& field, const PlotOverlay& overlay = {});
// Tear curve in original coordinates over the source box. 2D only.
std::string tear_svg(const TearGraph& tear, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
void emit_plot(const MultiplicityField& field, const std::filesystem::path& path, const PlotOverlay& overlay = {});
void emit_plot(const TearGraph& tear, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
               const std::filesystem::path& path);

std::string field_csv(const MultiplicityField& field);
std::string tear_csv(const TearGraph& tear);

}  // namespace tears
