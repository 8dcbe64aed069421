#include "tears/cli_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "tears/appendix.hpp"
#include "tears/errors.hpp"
#include "tears/scenarios.hpp"
#include "tears/stability_harness.hpp"

namespace tears {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Input iterator that counts newlines as the parser consumes them.
struct LineState {
  int line = 1;
  char last = 0;
};

class CountingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator(const char* p, LineState* s) : p_(p), s_(s) {}
  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    s_->last = *p_;
    if (*p_ == '\n') ++s_->line;
    ++p_;
    return *this;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const CountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_;
  LineState* s_;
};

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Records the line on which each value starts, keyed by JSON pointer.
class LineRecorder : public nlohmann::json_sax<json> {
 public:
  explicit LineRecorder(LineState* s) : s_(s) {}
  std::map<std::string, int> lines;

  bool null() override { return scalar(false); }
  bool boolean(bool) override { return scalar(false); }
  bool number_integer(number_integer_t) override { return scalar(true); }
  bool number_unsigned(number_unsigned_t) override { return scalar(true); }
  bool number_float(number_float_t, const string_t&) override { return scalar(true); }
  bool string(string_t&) override { return scalar(false); }
  bool binary(binary_t&) override { return scalar(false); }
  bool start_object(std::size_t) override {
    open(false);
    return true;
  }
  bool key(string_t& k) override {
    stack_.back().key = k;
    lines[path()] = s_->line;
    return true;
  }
  bool end_object() override {
    stack_.pop_back();
    return true;
  }
  bool start_array(std::size_t) override {
    open(true);
    return true;
  }
  bool end_array() override {
    stack_.pop_back();
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }

 private:
  struct Frame {
    bool array = false;
    long index = -1;
    std::string key;
  };
  std::vector<Frame> stack_;
  LineState* s_;

  std::string path() const {
    std::string p;
    for (const auto& f : stack_) p += "/" + (f.array ? std::to_string(f.index) : escape_pointer(f.key));
    return p;
  }
  void mark(bool lookahead) {
    if (stack_.empty()) {
      lines[""] = s_->line;
      return;
    }
    if (stack_.back().array) {
      ++stack_.back().index;
      // numbers are terminated by one character of lookahead
      const int line = s_->line - (lookahead && s_->last == '\n' ? 1 : 0);
      lines.emplace(path(), line);
    }
  }
  bool scalar(bool lookahead) {
    mark(lookahead);
    return true;
  }
  void open(bool array) {
    mark(false);
    stack_.push_back({array, -1, {}});
  }
};

class Reader {
 public:
  Reader(std::string origin, std::map<std::string, int> lines) : origin_(std::move(origin)), lines_(std::move(lines)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& message) const {
    int line = 0;
    for (std::string p = field;; p = p.substr(0, p.rfind('/'))) {
      const auto it = lines_.find(p);
      if (it != lines_.end()) {
        line = it->second;
        break;
      }
      if (p.empty()) break;
    }
    std::ostringstream os;
    os << origin_ << ":" << line << ": " << (field.empty() ? "/" : field) << ": " << message;
    throw SchemaError(os.str(), line, field);
  }

  void allow_keys(const json& obj, const std::string& at, const std::set<std::string>& keys) const {
    if (!obj.is_object()) fail(at, "expected an object");
    for (const auto& [k, v] : obj.items())
      if (!keys.count(k)) fail(at + "/" + escape_pointer(k), "unknown field");
  }

  double number(const json& obj, const std::string& at, const std::string& key) const {
    const std::string f = at + "/" + key;
    if (!obj.contains(key)) fail(f, "missing required field");
    return number_value(obj.at(key), f);
  }
  double number_value(const json& v, const std::string& f) const {
    if (!v.is_number()) fail(f, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(f, "expected a finite number");
    return d;
  }
  long integer_value(const json& v, const std::string& f) const {
    if (!v.is_number_integer()) fail(f, "expected an integer");
    return v.get<long>();
  }
  std::string string(const json& obj, const std::string& at, const std::string& key) const {
    const std::string f = at + "/" + key;
    if (!obj.contains(key)) fail(f, "missing required field");
    if (!obj.at(key).is_string()) fail(f, "expected a string");
    return obj.at(key).get<std::string>();
  }
  Eigen::VectorXd vector(const json& v, const std::string& f) const {
    if (!v.is_array() || v.empty()) fail(f, "expected a nonempty array of numbers");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = number_value(v[i], f + "/" + std::to_string(i));
    return out;
  }
  std::vector<int> ints(const json& v, const std::string& f) const {
    if (!v.is_array()) fail(f, "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(static_cast<int>(integer_value(v[i], f + "/" + std::to_string(i))));
    return out;
  }

 private:
  std::string origin_;
  std::map<std::string, int> lines_;
};

const std::vector<std::string> kAnalyses{"solve", "tear", "mult", "stability", "appendix"};

std::vector<std::string> default_analyses(const std::string& builtin, const TargetDecomposition& nu) {
  if (builtin == "appendix") return {"appendix"};
  if (builtin == "triangle") return {"solve", "mult", "stability"};
  const int pieces = static_cast<int>(nu.piece_ids().size());
  if (pieces == 2) return {"solve", "tear", "mult"};
  return {"solve", "mult"};
}

void fill_builtin(Scenario& s) {
  if (s.builtin == "two-atoms") {
    auto b = two_atoms_scenario();
    s.mu = b.mu;
    s.nu = b.nu;
  } else if (s.builtin == "triangle") {
    auto b = triangle_scenario();
    s.mu = b.mu;
    s.nu = b.nu;
  } else if (s.builtin == "random-k-pieces") {
    auto b = random_k_pieces_scenario(s.k, s.seed, s.per_piece, s.radius);
    s.mu = b.mu;
    s.nu = b.nu;
  } else if (s.builtin == "appendix") {
    const AppendixScenario A;
    s.mu = A.source();
    s.nu = A.target();
    s.lattice = 512;
  } else {
    throw ArgumentError("unknown built-in scenario '" + s.builtin + "'");
  }
}

ojson vec_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ojson points_json(const std::vector<Eigen::VectorXd>& pts) {
  ojson a = ojson::array();
  for (const auto& p : pts) a.push_back(vec_json(p));
  return a;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v + 0.0);
  return buf;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ";" : "") + std::to_string(ids[i]);
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
  if (!out) throw ArgumentError("failed writing " + path.string());
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

const char* colour(int id) {
  const int n = static_cast<int>(std::size(kPalette));
  return kPalette[((id % n) + n) % n];
}

std::vector<PointSet> piece_hulls(const TargetDecomposition& nu, const std::vector<int>& ids) {
  std::vector<PointSet> out;
  for (int id : ids) out.push_back(nu.piece_points(id));
  return out;
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"two-atoms", "triangle", "appendix", "random-k-pieces"};
  return names;
}

Scenario builtin_scenario(const std::string& name, std::uint64_t seed, int k) {
  Scenario s;
  s.name = name;
  s.builtin = name;
  s.seed = seed;
  s.k = k;
  fill_builtin(s);
  s.analyses = default_analyses(name, s.nu);
  return s;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  LineState state;
  LineRecorder recorder(&state);
  const CountingIterator first(text.data(), &state), last(text.data() + text.size(), &state);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    const std::size_t upto = std::min(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < upto; ++i) line += text[i] == '\n';
    std::ostringstream os;
    os << origin << ":" << line << ": malformed JSON: " << e.what();
    throw SchemaError(os.str(), line, "");
  }
  json::sax_parse(first, last, &recorder);
  const Reader R(origin, recorder.lines);

  R.allow_keys(doc, "", {"schema", "version", "name", "builtin", "k", "per_piece", "radius", "source", "target",
                         "analyses", "lattice", "tol", "seed", "stability", "tear", "window"});
  if (doc.contains("schema") && doc["schema"] != "tears-scenario") R.fail("/schema", "expected \"tears-scenario\"");
  if (!doc.contains("version")) R.fail("/version", "missing required field");
  if (R.integer_value(doc["version"], "/version") != kScenarioVersion)
    R.fail("/version", "unsupported version (expected " + std::to_string(kScenarioVersion) + ")");

  Scenario s;
  s.name = R.string(doc, "", "name");
  if (doc.contains("seed")) {
    const long v = R.integer_value(doc["seed"], "/seed");
    if (v < 0) R.fail("/seed", "must be nonnegative");
    s.seed = static_cast<std::uint64_t>(v);
  }
  if (doc.contains("builtin")) {
    s.builtin = R.string(doc, "", "builtin");
    const auto& names = builtin_names();
    if (std::find(names.begin(), names.end(), s.builtin) == names.end()) R.fail("/builtin", "unknown built-in scenario");
    if (doc.contains("source") || doc.contains("target")) R.fail("/builtin", "a built-in scenario defines its own source and target");
    if (doc.contains("k")) s.k = static_cast<int>(R.integer_value(doc["k"], "/k"));
    if (doc.contains("per_piece")) s.per_piece = static_cast<int>(R.integer_value(doc["per_piece"], "/per_piece"));
    if (doc.contains("radius")) s.radius = R.number(doc, "", "radius");
    try {
      fill_builtin(s);
    } catch (const ArgumentError& e) {
      R.fail("/builtin", e.what());
    }
  } else {
    for (const char* key : {"k", "per_piece", "radius"})
      if (doc.contains(key)) R.fail(std::string("/") + key, "only valid with a built-in scenario");
    if (!doc.contains("source")) R.fail("/source", "missing required field");
    if (!doc.contains("target")) R.fail("/target", "missing required field");
    const json& src = doc["source"];
    R.allow_keys(src, "/source", {"type", "lower", "upper", "vertices"});
    const std::string type = R.string(src, "/source", "type");
    try {
      if (type == "box") {
        R.allow_keys(src, "/source", {"type", "lower", "upper"});
        if (!src.contains("lower")) R.fail("/source/lower", "missing required field");
        if (!src.contains("upper")) R.fail("/source/upper", "missing required field");
        const auto lo = R.vector(src["lower"], "/source/lower"), hi = R.vector(src["upper"], "/source/upper");
        if (lo.size() != hi.size()) R.fail("/source/upper", "dimension differs from lower");
        if (!(hi.array() > lo.array()).all()) R.fail("/source/upper", "must exceed lower on every axis");
        s.mu = SourceMeasure::box(lo, hi);
      } else if (type == "polygon") {
        R.allow_keys(src, "/source", {"type", "vertices"});
        if (!src.contains("vertices")) R.fail("/source/vertices", "missing required field");
        const json& vs = src["vertices"];
        if (!vs.is_array() || vs.size() < 3) R.fail("/source/vertices", "expected at least three vertices");
        std::vector<Eigen::Vector2d> verts;
        for (std::size_t i = 0; i < vs.size(); ++i) {
          const std::string f = "/source/vertices/" + std::to_string(i);
          const auto v = R.vector(vs[i], f);
          if (v.size() != 2) R.fail(f, "polygon vertices must be 2D");
          verts.emplace_back(v[0], v[1]);
        }
        try {
          s.mu = SourceMeasure::polygon(verts);
        } catch (const std::exception& e) {
          R.fail("/source/vertices", e.what());
        }
      } else {
        R.fail("/source/type", "expected \"box\" or \"polygon\"");
      }
    } catch (const ArgumentError& e) {
      R.fail("/source", e.what());
    }

    const json& tgt = doc["target"];
    R.allow_keys(tgt, "/target", {"atoms", "labels"});
    if (!tgt.contains("atoms")) R.fail("/target/atoms", "missing required field");
    const json& as = tgt["atoms"];
    if (!as.is_array() || as.empty()) R.fail("/target/atoms", "expected a nonempty array");
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < as.size(); ++i) {
      const std::string at = "/target/atoms/" + std::to_string(i);
      R.allow_keys(as[i], at, {"point", "weight", "piece"});
      if (!as[i].contains("point")) R.fail(at + "/point", "missing required field");
      Atom a;
      a.point = R.vector(as[i]["point"], at + "/point");
      if (a.point.size() != s.mu.dim()) R.fail(at + "/point", "dimension differs from the source");
      a.weight = R.number(as[i], at, "weight");
      if (!(a.weight > 0.0)) R.fail(at + "/weight", "must be positive");
      if (!as[i].contains("piece")) R.fail(at + "/piece", "missing required field");
      a.piece = static_cast<int>(R.integer_value(as[i]["piece"], at + "/piece"));
      atoms.push_back(std::move(a));
    }
    std::map<int, std::string> labels;
    std::set<int> ids;
    for (const auto& a : atoms) ids.insert(a.piece);
    if (tgt.contains("labels")) {
      const json& ls = tgt["labels"];
      if (!ls.is_object()) R.fail("/target/labels", "expected an object of piece id to label");
      for (const auto& [k, v] : ls.items()) {
        const std::string f = "/target/labels/" + escape_pointer(k);
        int id = 0;
        try {
          std::size_t used = 0;
          id = std::stoi(k, &used);
          if (used != k.size()) throw std::invalid_argument(k);
        } catch (const std::exception&) {
          R.fail(f, "label keys must be integer piece ids");
        }
        if (!ids.count(id)) R.fail(f, "no atom belongs to this piece");
        if (!v.is_string()) R.fail(f, "expected a string");
        labels[id] = v.get<std::string>();
      }
    }
    try {
      s.nu = TargetDecomposition(atoms, labels);
    } catch (const ArgumentError& e) {
      R.fail("/target/atoms", e.what());
    }
    try {
      std::map<int, PointSet> hulls;
      for (int id : s.nu.piece_ids()) hulls.emplace(id, s.nu.piece_points(id));
      require_disjoint_hulls(hulls);
    } catch (const PreconditionError& e) {
      R.fail("/target/atoms", e.what());
    }
  }

  if (doc.contains("lattice")) {
    const long n = R.integer_value(doc["lattice"], "/lattice");
    if (n < 3 || n > 4096) R.fail("/lattice", "nodes per axis must lie in [3, 4096]");
    s.lattice = static_cast<int>(n);
  }
  if (doc.contains("tol")) {
    s.tol = R.number(doc, "", "tol");
    if (!(s.tol > 0.0)) R.fail("/tol", "must be positive");
  }
  const std::vector<int> ids = s.nu.piece_ids();
  auto check_pieces = [&](const std::vector<int>& ps, const std::string& f) {
    std::set<int> seen;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (std::find(ids.begin(), ids.end(), ps[i]) == ids.end())
        R.fail(f + "/" + std::to_string(i), "unknown piece id " + std::to_string(ps[i]));
      if (!seen.insert(ps[i]).second) R.fail(f + "/" + std::to_string(i), "repeated piece id");
    }
  };
  if (doc.contains("stability")) {
    const json& st = doc["stability"];
    R.allow_keys(st, "/stability", {"eta", "eps", "seeds", "pieces"});
    if (st.contains("eta")) s.eta = R.number(st, "/stability", "eta");
    if (st.contains("eps")) s.eps = R.number(st, "/stability", "eps");
    if (!(s.eta > 0.0)) R.fail("/stability/eta", "must be positive");
    if (!(s.eps > 0.0)) R.fail("/stability/eps", "must be positive");
    if (st.contains("seeds")) {
      const long n = R.integer_value(st["seeds"], "/stability/seeds");
      if (n < 1) R.fail("/stability/seeds", "must be at least 1");
      s.seeds = static_cast<int>(n);
    }
    if (st.contains("pieces")) {
      s.stability_pieces = R.ints(st["pieces"], "/stability/pieces");
      check_pieces(s.stability_pieces, "/stability/pieces");
      if (s.stability_pieces.empty()) R.fail("/stability/pieces", "expected at least one piece");
    }
  }
  if (doc.contains("tear")) {
    const json& te = doc["tear"];
    R.allow_keys(te, "/tear", {"pieces"});
    if (te.contains("pieces")) {
      s.tear_pieces = R.ints(te["pieces"], "/tear/pieces");
      if (s.tear_pieces.size() != 2) R.fail("/tear/pieces", "expected exactly two piece ids");
      check_pieces(s.tear_pieces, "/tear/pieces");
    }
  }
  if (doc.contains("window")) {
    const json& w = doc["window"];
    R.allow_keys(w, "/window", {"lower", "upper"});
    if (!w.contains("lower")) R.fail("/window/lower", "missing required field");
    if (!w.contains("upper")) R.fail("/window/upper", "missing required field");
    const auto lo = R.vector(w["lower"], "/window/lower"), hi = R.vector(w["upper"], "/window/upper");
    if (lo.size() != s.mu.dim() || hi.size() != s.mu.dim()) R.fail("/window", "dimension differs from the source");
    if (!(lo.array() <= s.mu.lower().array()).all() || !(hi.array() >= s.mu.upper().array()).all())
      R.fail("/window", "lattice window must cover the source support");
    s.window = std::make_pair(lo, hi);
  }
  if (doc.contains("analyses")) {
    const json& an = doc["analyses"];
    if (!an.is_array() || an.empty()) R.fail("/analyses", "expected a nonempty array of analysis names");
    for (std::size_t i = 0; i < an.size(); ++i) {
      const std::string f = "/analyses/" + std::to_string(i);
      if (!an[i].is_string()) R.fail(f, "expected a string");
      const std::string a = an[i].get<std::string>();
      if (std::find(kAnalyses.begin(), kAnalyses.end(), a) == kAnalyses.end()) R.fail(f, "unknown analysis '" + a + "'");
      if (a == "appendix" && s.builtin != "appendix") R.fail(f, "appendix verification needs the appendix built-in");
      if (a == "tear" && s.tear_pieces.empty() && ids.size() != 2)
        R.fail(f, "tear needs /tear/pieces unless the target has exactly two pieces");
      if (std::find(s.analyses.begin(), s.analyses.end(), a) == s.analyses.end()) s.analyses.push_back(a);
    }
  } else {
    s.analyses = default_analyses(s.builtin, s.nu);
  }
  if (s.mu.dim() != 2)
    for (std::size_t i = 0; i < s.analyses.size(); ++i)
      if (s.analyses[i] == "mult" || s.analyses[i] == "stability")
        R.fail("/analyses/" + std::to_string(i), "'" + s.analyses[i] + "' needs a 2D source");
  return s;
}

Scenario load_scenario(const std::string& file_or_builtin) {
  const std::filesystem::path p(file_or_builtin);
  std::error_code ec;
  if (std::filesystem::is_regular_file(p, ec)) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw SchemaError(file_or_builtin + ": cannot read file", 0, "");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_scenario(text, file_or_builtin);
  }
  const auto& names = builtin_names();
  if (std::find(names.begin(), names.end(), file_or_builtin) != names.end()) return builtin_scenario(file_or_builtin);
  throw SchemaError(file_or_builtin + ": no such file or built-in scenario", 0, "");
}

Latticed scenario_lattice(const Scenario& s) {
  if (s.window) return Latticed::box(s.window->first, s.window->second, s.lattice);
  return Latticed::box(s.mu.lower(), s.mu.upper(), s.lattice);
}

std::string field_csv(const MultiplicityField& f) {
  const int n = f.lattice.dim();
  std::string out;
  for (int a = 0; a < n; ++a) out += "x" + std::to_string(a) + ",";
  out += "inside,multiplicity,active\n";
  for (std::size_t i = 0; i < f.lattice.size(); ++i) {
    const auto x = f.lattice.node(i);
    for (int a = 0; a < n; ++a) out += num(x[a]) + ",";
    out += std::to_string(static_cast<int>(f.inside[i])) + "," + std::to_string(f.multiplicity[i]) + "," +
           join_ids(f.active[i]) + "\n";
  }
  return out;
}

std::string tear_csv(const TearGraph& t) {
  const int m = t.lattice.lattice.dim();
  const int n = t.frame.dim();
  std::string out;
  for (int a = 0; a < m; ++a) out += "xp" + std::to_string(a) + ",";
  out += "h,h_plus,h_minus,finite,boundary_hit";
  for (int a = 0; a < n; ++a) out += ",x" + std::to_string(a);
  out += "\n";
  for (std::size_t i = 0; i < t.lattice.lattice.size(); ++i) {
    const auto xp = t.lattice.lattice.node(i);
    for (int a = 0; a < m; ++a) out += num(xp[a]) + ",";
    out += num(t.h_values[i]) + "," + num(t.h_plus[i]) + "," + num(t.h_minus[i]) + "," +
           std::to_string(static_cast<int>(t.finite[i])) + "," + std::to_string(static_cast<int>(t.boundary_hit[i]));
    Eigen::VectorXd y(n);
    y.head(m) = xp;
    y[m] = t.h_values[i];
    const auto x = t.frame.from_frame(y);
    for (int a = 0; a < n; ++a) out += "," + num(x[a]);
    out += "\n";
  }
  return out;
}

std::string field_svg(const MultiplicityField& f, const PlotOverlay& overlay) {
  if (f.lattice.dim() != 2) throw DomainError("plot: unsupported dimension " + std::to_string(f.lattice.dim()));
  const int nx = f.lattice.dims[0], ny = f.lattice.dims[1];
  const double cell = std::max(1.0, std::min(4.0, 600.0 / std::max(nx, ny)));
  const double W = cell * nx, H = cell * ny;
  const bool side = overlay.pieces && overlay.pieces->dim() == 2;
  const double panel = side ? H : 0.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W + panel) << "\" height=\"" << num(H)
     << "\" viewBox=\"0 0 " << num(W + panel) << " " << num(H) << "\">\n";
  os << "<rect width=\"" << num(W + panel) << "\" height=\"" << num(H) << "\" fill=\"white\"/>\n";
  auto node_at = [&](int i, int j) { return f.lattice.flatten({i, j}); };
  // rows top to bottom, runs of equal colour merged
  os << "<g id=\"regions\" shape-rendering=\"crispEdges\">\n";
  for (int j = ny - 1; j >= 0; --j) {
    int i = 0;
    while (i < nx) {
      const std::size_t id = node_at(i, j);
      const int piece = f.inside[id] && !f.active[id].empty() ? f.active[id].front() : INT32_MIN;
      int e = i + 1;
      while (e < nx) {
        const std::size_t id2 = node_at(e, j);
        const int p2 = f.inside[id2] && !f.active[id2].empty() ? f.active[id2].front() : INT32_MIN;
        if (p2 != piece) break;
        ++e;
      }
      if (piece != INT32_MIN)
        os << "<rect x=\"" << num(i * cell) << "\" y=\"" << num((ny - 1 - j) * cell) << "\" width=\"" << num((e - i) * cell)
           << "\" height=\"" << num(cell) << "\" fill=\"" << colour(piece) << "\"/>\n";
      i = e;
    }
  }
  os << "</g>\n";
  std::ostringstream sigma;
  for (int j = ny - 1; j >= 0; --j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t id = node_at(i, j);
      if (!f.inside[id] || f.multiplicity[id] < 2) continue;
      sigma << "<rect x=\"" << num(i * cell) << "\" y=\"" << num((ny - 1 - j) * cell) << "\" width=\"" << num(cell)
            << "\" height=\"" << num(cell) << "\" fill=\"" << (f.multiplicity[id] >= 3 ? "#d00000" : "#202020") << "\"/>\n";
    }
  if (!sigma.str().empty()) os << "<g id=\"sigma\" shape-rendering=\"crispEdges\">\n" << sigma.str() << "</g>\n";
  const auto lo = f.lattice.origin, hi = f.lattice.upper();
  auto px = [&](const Eigen::VectorXd& x) {
    return Eigen::Vector2d((x[0] - lo[0]) / (hi[0] - lo[0]) * (W - cell) + 0.5 * cell,
                           (hi[1] - x[1]) / (hi[1] - lo[1]) * (H - cell) + 0.5 * cell);
  };
  if (!overlay.markers.empty()) {
    os << "<g id=\"markers\" fill=\"none\" stroke=\"black\" stroke-width=\"1\">\n";
    for (const auto& m : overlay.markers) {
      if (m.size() != 2) continue;
      const auto p = px(m);
      os << "<circle cx=\"" << num(p.x()) << "\" cy=\"" << num(p.y()) << "\" r=\"" << num(std::max(2.0, 1.5 * cell)) << "\"/>\n";
    }
    os << "</g>\n";
  }
  if (side) {
    const auto pts = overlay.pieces->points();
    const Eigen::Vector2d plo = pts.rowwise().minCoeff(), phi = pts.rowwise().maxCoeff();
    const double span = std::max(1e-12, (phi - plo).maxCoeff());
    const Eigen::Vector2d mid = 0.5 * (plo + phi);
    os << "<g id=\"pieces\">\n<rect x=\"" << num(W) << "\" width=\"" << num(panel) << "\" height=\"" << num(H)
       << "\" fill=\"#f4f4f4\"/>\n";
    for (const auto& a : overlay.pieces->atoms()) {
      const double cx = W + panel / 2 + (a.point[0] - mid[0]) / span * 0.8 * panel;
      const double cy = H / 2 - (a.point[1] - mid[1]) / span * 0.8 * panel;
      os << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(std::max(2.0, 0.01 * panel))
         << "\" fill=\"" << colour(a.piece) << "\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string tear_svg(const TearGraph& t, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (t.frame.dim() != 2 || lo.size() != 2 || hi.size() != 2)
    throw DomainError("plot: unsupported dimension " + std::to_string(t.frame.dim()));
  const double S = 600.0;
  const double w = hi[0] - lo[0], h = hi[1] - lo[1];
  const double scale = S / std::max(w, h);
  const double W = w * scale, H = h * scale;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H) << "\" viewBox=\"0 0 "
     << num(W) << " " << num(H) << "\">\n<rect width=\"" << num(W) << "\" height=\"" << num(H)
     << "\" fill=\"white\" stroke=\"#888\"/>\n";
  std::vector<std::string> runs;
  std::string cur;
  for (std::size_t i = 0; i < t.lattice.lattice.size(); ++i) {
    if (!t.finite[i]) {
      if (!cur.empty()) runs.push_back(cur), cur.clear();
      continue;
    }
    Eigen::Vector2d y(t.lattice.lattice.node(i)[0], t.h_values[i]);
    const Eigen::VectorXd x = t.frame.from_frame(y);
    cur += (cur.empty() ? "" : " ") + num((x[0] - lo[0]) * scale) + "," + num((hi[1] - x[1]) * scale);
  }
  if (!cur.empty()) runs.push_back(cur);
  for (const auto& r : runs)
    os << "<polyline id=\"tear\" fill=\"none\" stroke=\"#d00000\" stroke-width=\"2\" points=\"" << r << "\"/>\n";
  os << "</svg>\n";
  return os.str();
}

void emit_plot(const MultiplicityField& field, const std::filesystem::path& path, const PlotOverlay& overlay) {
  write_file(path, field_svg(field, overlay));
}

void emit_plot(const TearGraph& tear, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
               const std::filesystem::path& path) {
  write_file(path, tear_svg(tear, lo, hi));
}

RunResult run_scenario(const Scenario& s, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunResult r;
  auto& rep = r.report;
  rep["schema"] = "tears-report";
  rep["version"] = kScenarioVersion;
  rep["scenario"] = s.name;
  if (!s.builtin.empty()) rep["builtin"] = s.builtin;
  rep["dimension"] = s.mu.dim();
  rep["atoms"] = s.nu.size();
  rep["pieces"] = s.nu.piece_ids();
  rep["lattice"] = s.lattice;
  rep["tol"] = s.tol;
  rep["seed"] = s.seed;
  rep["analyses"] = s.analyses;
  rep["results"] = ojson::object();
  auto& res = rep["results"];

  auto wants = [&](const char* a) { return std::find(s.analyses.begin(), s.analyses.end(), a) != s.analyses.end(); };
  auto fail = [&](const std::string& what) {
    r.pass = false;
    r.failures.push_back(what);
  };
  auto write = [&](const std::string& name, const std::string& text) {
    write_file(out_dir / name, text);
    r.files.push_back(out_dir / name);
  };

  const bool needs_solve = wants("solve") || wants("tear") || wants("mult");
  std::optional<SolveReport> sol;
  if (needs_solve) {
    ojson j;
    try {
      SolverOptions so;
      so.seed = s.seed;
      if (s.builtin == "appendix") {
        const AppendixScenario A;
        A.target();
        so.initial = A.warm_start();
      }
      sol = solve_semidiscrete(s.mu, s.nu, s.tol, so);
      j["psi"] = vec_json(sol->dual.psi);
      j["masses"] = vec_json(sol->masses);
      j["weights"] = vec_json(s.nu.weights());
      j["residual"] = sol->residual;
      j["iterations"] = sol->iterations;
      j["exact"] = sol->exact;
      j["history"] = sol->history;
      j["pass"] = sol->residual <= s.tol;
      if (s.mu.dim() == 2) j["transport_cost"] = transport_cost(s.mu, s.nu, sol->dual);
      if (!(sol->residual <= s.tol)) fail("solve");
    } catch (const ConvergenceFailure& e) {
      j["pass"] = false;
      j["error"] = e.what();
      j["residual"] = e.worst_residual;
      j["iterations"] = e.iterations;
      fail("solve");
    }
    res["solve"] = j;
  }

  if (wants("tear")) {
    ojson j;
    if (!sol) {
      j["skipped"] = "no converged dual weights";
      fail("tear");
    } else {
      std::vector<int> pair = s.tear_pieces;
      if (pair.empty()) pair = s.nu.piece_ids();
      const auto parts = decompose(s.nu, sol->dual);
      const ConvexFunction up = parts.at(pair[0]), um = parts.at(pair[1]);
      const PointSet cp = subgradient_cloud(up), cm = subgradient_cloud(um);
      j["pieces"] = pair;
      try {
        const auto frame = find_separating_frame(cp, cm);
        const auto L = s.window ? tear_lattice_for_box(frame, s.window->first, s.window->second, s.lattice)
                                : tear_lattice_for_box(frame, s.mu.lower(), s.mu.upper(), s.lattice);
        const auto tear = tear_height(up, um, frame, L);
        const auto lip = lipschitz_certificate(tear, cp, cm);
        const auto dc = dc_structure(tear, 1e-8);
        double hmax = 0.0;
        for (std::size_t i = 0; i < tear.h_values.size(); ++i)
          if (tear.finite[i]) hmax = std::max(hmax, std::abs(tear.h_values[i]));
        j["normal"] = vec_json(frame.normal);
        j["midheight"] = frame.midheight;
        j["spacing"] = frame.spacing;
        j["theta_min"] = tear.theta_min;
        j["tan_theta_min"] = tear.tan_theta_min;
        j["measured_lip"] = lip.measured_lip;
        j["diam_bound"] = lip.diam_bound;
        j["lipschitz_pass"] = lip.pass;
        if (!lip.pass) j["lipschitz_message"] = lip.message;
        j["dc_min_second_diff"] = {dc.min_second_diff_plus, dc.min_second_diff_minus};
        j["dc_pass"] = dc.pass;
        j["max_abs_h"] = hmax;
        j["pass"] = lip.pass && dc.pass;
        if (!lip.pass) {
          j["witnesses"] = points_json({tear.lattice.lattice.node(lip.witness_from), tear.lattice.lattice.node(lip.witness_to)});
          fail("tear.lipschitz");
        }
        if (!dc.pass) fail("tear.dc");
        write("tear.csv", tear_csv(tear));
        if (s.mu.dim() == 2) {
          const auto lo = s.window ? s.window->first : s.mu.lower();
          const auto hi = s.window ? s.window->second : s.mu.upper();
          write("tear.svg", tear_svg(tear, lo, hi));
        }
      } catch (const NoSeparation& e) {
        j["pass"] = false;
        j["error"] = e.what();
        j["witnesses"] = points_json({e.plus_witness, e.minus_witness});
        fail("tear.separation");
      }
    }
    res["tear"] = j;
  }

  if (wants("mult")) {
    ojson j;
    if (!sol) {
      j["skipped"] = "no converged dual weights";
      fail("mult");
    } else {
      const auto L = scenario_lattice(s);
      const auto field = cell_multiplicity_field(s.mu, s.nu, sol->dual, L);
      const auto ids = s.nu.piece_ids();
      std::map<int, std::size_t> counts;
      for (std::size_t i = 0; i < L.size(); ++i)
        if (field.inside[i]) ++counts[field.multiplicity[i]];
      ojson c = ojson::object();
      for (const auto& [k, n] : counts) c[std::to_string(k)] = n;
      j["counts"] = c;
      j["max_multiplicity"] = field.max_multiplicity();
      std::vector<Eigen::VectorXd> top;
      for (std::size_t i : field.nodes_with(field.max_multiplicity())) top.push_back(L.node(i));
      if (top.size() <= 32) j["max_nodes"] = points_json(top);
      const auto pd = power_diagram(s.mu, s.nu, sol->dual);
      ojson verts = ojson::array();
      for (const auto& v : pd.vertices) {
        const int mult = feature_multiplicity(s.nu, v.atoms, 0.0, s.nu);
        if (mult >= 3) verts.push_back({{"point", vec_json(v.point)}, {"multiplicity", mult}});
      }
      j["multiplicity_vertices"] = verts;
      bool ok = true;
      if (static_cast<int>(ids.size()) == L.dim() + 1) {
        const auto hulls = piece_hulls(s.nu, ids);
        const auto ind = affine_independence(hulls);
        j["independent"] = ind.independent;
        if (ind.independent) {
          const auto um = unique_max_multiplicity(field, hulls);
          j["unique_max"] = {{"pass", um.pass}, {"clusters", um.clusters}, {"diameter_steps", um.diameter_steps}};
          if (!um.pass) {
            j["unique_max"]["witnesses"] = points_json(um.counterexamples);
            ok = false;
            fail("mult.unique_max");
          }
        }
      }
      ojson conn = ojson::object();
      for (int id : ids) {
        const auto cr = connectivity_check(field, id);
        conn[std::to_string(id)] = {{"connected", cr.connected}, {"components", cr.components.size()}};
        if (!cr.connected) {
          ok = false;
          fail("mult.connectivity." + std::to_string(id));
        }
      }
      j["connectivity"] = conn;
      j["pass"] = ok;
      write("mult.csv", field_csv(field));
      PlotOverlay ov;
      ov.pieces = &s.nu;
      write("mult.svg", field_svg(field, ov));
    }
    res["mult"] = j;
  }

  if (wants("stability")) {
    ojson j;
    StabilityOptions so;
    so.eps = s.eps;
    so.eta = s.eta;
    so.solver_tol = s.tol;
    so.lattice = scenario_lattice(s);
    for (int i = 0; i < s.seeds; ++i) so.seeds.push_back(s.seed + static_cast<std::uint64_t>(i));
    const std::vector<int> subset = s.stability_pieces.empty() ? s.nu.piece_ids() : s.stability_pieces;
    try {
      const auto sr = stability_experiment(s.mu, s.nu, subset, so);
      j["subset"] = sr.subset;
      j["k"] = sr.k;
      j["eta"] = s.eta;
      j["eps"] = s.eps;
      j["independent"] = sr.independent;
      j["independence"] = sr.independence;
      j["base_ok"] = sr.base_ok;
      if (sr.x0.size()) j["x0"] = vec_json(sr.x0);
      ojson runs = ojson::array();
      std::vector<Eigen::VectorXd> found;
      for (const auto& run : sr.runs) {
        ojson o{{"seed", run.seed}, {"found", run.found}, {"displacement", run.displacement},
                {"certified", run.certified}, {"bottleneck", run.bottleneck}, {"max_multiplicity", run.max_multiplicity}};
        if (run.location.size()) {
          o["location"] = vec_json(run.location);
          found.push_back(run.location);
        }
        if (!run.note.empty()) o["note"] = run.note;
        runs.push_back(o);
      }
      j["runs"] = runs;
      j["median_displacement"] = sr.median_displacement;
      j["pass"] = sr.pass;
      if (!sr.message.empty()) j["message"] = sr.message;
      if (!sr.pass) fail("stability");
      if (sol || s.mu.dim() == 2) {
        SolverOptions o2;
        o2.seed = s.seed;
        const auto base = sol ? *sol : solve_semidiscrete(s.mu, s.nu, s.tol, o2);
        const auto field = cell_multiplicity_field(s.mu, s.nu, base.dual, so.lattice);
        PlotOverlay ov;
        ov.markers = found;
        ov.pieces = &s.nu;
        write("stability.svg", field_svg(field, ov));
      }
    } catch (const PreconditionError& e) {
      j["pass"] = false;
      j["error"] = e.what();
      fail("stability");
    } catch (const ConvergenceFailure& e) {
      j["pass"] = false;
      j["error"] = e.what();
      fail("stability");
    }
    res["stability"] = j;
  }

  if (wants("appendix")) {
    AppendixOptions ao;
    ao.lattice = s.lattice;
    ao.solver_tol = s.tol;
    const auto a = appendix_verify(ao);
    ojson j;
    j["r0"] = a.r0;
    ojson small = ojson::array();
    for (const auto& q : a.smallness) small.push_back({{"name", q.name}, {"value", q.value}, {"holds", q.holds}});
    j["smallness"] = small;
    j["smallness_ok"] = a.smallness_ok;
    j["origin_values"] = a.origin_values;
    j["coincidence_ok"] = a.coincidence_ok;
    j["convexity_min"] = a.convexity_min;
    j["convex_ok"] = a.convex_ok;
    j["region_agreement"] = a.region_agreement;
    j["region_nodes"] = a.region_nodes;
    j["regions_ok"] = a.regions_ok;
    if (!a.regions_ok) {
      std::vector<Eigen::VectorXd> w(a.region_witnesses.begin(), a.region_witnesses.end());
      j["region_witnesses"] = points_json(w);
    }
    ojson curves = ojson::array();
    for (const auto& c : a.curves)
      curves.push_back({{"name", c.name}, {"piece", c.piece}, {"expected_sign", c.expected_sign}, {"samples", c.samples},
                        {"violations", c.violations}, {"worst", c.worst}, {"witness", vec_json(c.witness)}});
    j["curves"] = curves;
    j["curves_ok"] = a.curves_ok;
    j["atoms"] = a.atoms;
    j["base_max_multiplicity"] = a.base_max_multiplicity;
    j["base_nodes"] = a.base_nodes;
    j["base_point"] = vec_json(a.base_point);
    j["base_discrete_multiplicity"] = a.base_discrete_multiplicity;
    j["delta"] = a.delta;
    j["shifts"] = a.shifts;
    j["shifted_max_multiplicity"] = a.shifted_max_multiplicity;
    j["shift_ok"] = a.shift_ok;
    if (!a.shift_ok) {
      std::vector<Eigen::VectorXd> w(a.shift_witnesses.begin(), a.shift_witnesses.end());
      j["shift_witnesses"] = points_json(w);
    }
    j["pass"] = a.pass;
    for (const auto& [name, ok] : std::vector<std::pair<std::string, bool>>{{"smallness", a.smallness_ok},
                                                                          {"coincidence", a.coincidence_ok},
                                                                          {"convexity", a.convex_ok},
                                                                          {"regions", a.regions_ok},
                                                                          {"curves", a.curves_ok},
                                                                          {"shift", a.shift_ok}})
      if (!ok) fail("appendix." + name);
    res["appendix"] = j;

    const AppendixScenario A(ao.r0);
    PieceFamily fam;
    fam.ids = {1, 2, 3, 4};
    fam.values = [&A](const Eigen::VectorXd& x, Eigen::VectorXd& v) {
      v.resize(4);
      for (int i = 0; i < 4; ++i) v[i] = A.value(i + 1, Eigen::Vector2d(x[0], x[1]));
    };
    const auto L = Latticed::box(A.lower(), A.upper(), std::min(s.lattice, 257));
    const auto field = multiplicity_field(fam, L, 1e-7, [&A](const Eigen::VectorXd& x) {
      return A.in_domain(Eigen::Vector2d(x[0], x[1]));
    });
    write("appendix.svg", field_svg(field));
  }

  rep["pass"] = r.pass;
  rep["failures"] = r.failures;
  write("report.json", rep.dump(2) + "\n");
  return r;
}

}  // namespace tears
