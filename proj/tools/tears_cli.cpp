#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tears/cli_io.hpp"
#include "tears/errors.hpp"

namespace {

struct Overrides {
  std::optional<int> lattice;
  std::optional<double> tol, eta, eps;
  std::optional<std::uint64_t> seed;
  std::string out = "tears-out";
};

void add_flags(CLI::App* cmd, Overrides& o, bool stability) {
  cmd->add_option("--lattice", o.lattice, "nodes per lattice axis")->check(CLI::Range(3, 4096));
  cmd->add_option("--tol", o.tol, "solver mass tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory");
  if (stability) {
    cmd->add_option("--eta", o.eta, "perturbation size")->check(CLI::PositiveNumber);
    cmd->add_option("--eps", o.eps, "search radius")->check(CLI::PositiveNumber);
  }
}

tears::Scenario prepare(const std::string& input, const Overrides& o, const std::string& analysis) {
  tears::Scenario s = tears::load_scenario(input);
  if (o.seed && s.builtin == "random-k-pieces") s = tears::builtin_scenario(s.builtin, *o.seed, s.k);
  if (o.lattice) s.lattice = *o.lattice;
  if (o.tol) s.tol = *o.tol;
  if (o.seed) s.seed = *o.seed;
  if (o.eta) s.eta = *o.eta;
  if (o.eps) s.eps = *o.eps;
  if (!analysis.empty()) {
    if (analysis == "appendix" && s.builtin != "appendix")
      throw tears::SchemaError(input + ": appendix verification needs the appendix built-in", 0, "/builtin");
    if (analysis == "tear" && s.tear_pieces.empty() && s.nu.piece_ids().size() != 2)
      throw tears::SchemaError(input + ": tear needs a target with exactly two pieces or /tear/pieces", 0, "/tear/pieces");
    if ((analysis == "mult" || analysis == "stability") && s.mu.dim() != 2)
      throw tears::SchemaError(input + ": " + analysis + " needs a 2D source", 0, "/source");
    s.analyses = {analysis};
  }
  return s;
}

int report(const tears::RunResult& r, const std::string& out) {
  std::cout << (r.pass ? "PASS" : "FAIL") << "  report: " << (std::filesystem::path(out) / "report.json").string() << "\n";
  if (!r.pass) {
    std::cerr << "certificate failures:";
    for (const auto& f : r.failures) std::cerr << " " << f;
    std::cerr << "\n" << r.report["results"].dump(2) << "\n";
  }
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tears of semidiscrete optimal transport: solver, tear extraction and stability experiments"};
  app.require_subcommand(1);
  Overrides o;
  std::string input;
  const char* builtin_help = "scenario file or built-in: two-atoms, triangle, appendix, random-k-pieces";
  struct Sub {
    const char* name;
    const char* help;
    const char* analysis;
  };
  const Sub subs[] = {{"solve", "solve the semidiscrete transport problem", "solve"},
                      {"tear", "extract the tear between two pieces", "tear"},
                      {"mult", "multiplicity field, uniqueness and connectivity", "mult"},
                      {"stability", "singularity stability under W-infinity perturbations", "stability"},
                      {"appendix", "verify the unstable four-piece example", "appendix"},
                      {"run", "run every analysis listed by the scenario", ""}};
  std::string chosen;
  for (const auto& sub : subs) {
    auto* cmd = app.add_subcommand(sub.name, sub.help);
    if (std::string(sub.name) == "appendix")
      cmd->add_option("scenario", input, builtin_help)->default_val("appendix");
    else
      cmd->add_option("scenario", input, builtin_help)->required();
    add_flags(cmd, o, std::string(sub.name) == "stability" || std::string(sub.name) == "run");
    cmd->callback([&chosen, &sub] { chosen = sub.analysis; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    const auto s = prepare(input, o, chosen);
    return report(tears::run_scenario(s, o.out), o.out);
  } catch (const tears::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const tears::ArgumentError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const tears::PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return 2;
  }
}
