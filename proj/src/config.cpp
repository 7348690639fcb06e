#include "hemalimit/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <sstream>

#include "hemalimit/io.hpp"

namespace hemalimit {
namespace {

namespace pt = boost::property_tree;

std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.erase(cut);
    boost::algorithm::trim(line);
    out << line << '\n';
  }
  return out.str();
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, v, boost::algorithm::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(to_double(key, p));
  }
  return out;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool has(const std::string& key) const { return tree_ && tree_->get_optional<std::string>(key).has_value(); }
  std::string text(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing key '" + name_ + "." + key + "'");
    return tree_->get<std::string>(key);
  }
  double number(const std::string& key) const { return to_double(name_ + "." + key, text(key)); }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  std::int64_t integer(const std::string& key) const { return to_int(name_ + "." + key, text(key)); }
  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }
  std::vector<double> numbers(const std::string& key) const { return to_doubles(name_ + "." + key, text(key)); }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

Section section(const pt::ptree& root, const std::string& name) {
  auto child = root.get_child_optional(name);
  return Section(child ? &*child : nullptr, name);
}

RateFunction parse_rate(const Section& s, const std::string& name) {
  if (!s.has("family")) throw ConfigError("section [" + name + "] needs a 'family' key");
  const std::string family = s.text("family");
  constexpr double inf = std::numeric_limits<double>::infinity();
  try {
    if (family == "constant") return RateFunction(ConstantRate{s.number("value")});
    if (family == "affine")
      return RateFunction(AffineRate{s.number("base"), s.number("slope_x", 0.0), s.number("slope_z", 0.0),
                                     s.number("z_saturation", inf)});
    if (family == "regulated")
      return RateFunction(RegulatedRate{s.number("base"), s.number("slope_x", 0.0), s.number("feedback", 0.0),
                                        s.number("floor", 0.0), s.number("ceiling", inf)});
    if (family == "tabulated")
      return RateFunction(TabulatedRate{s.numbers("x_nodes"), s.numbers("z_nodes"), s.numbers("values")});
  } catch (const std::invalid_argument& e) {
    throw ConfigError("[" + name + "]: " + e.what());
  }
  throw ConfigError("[" + name + "]: unknown rate family '" + family + "'");
}

InitialSpec parse_initial(const std::string& raw) {
  std::string v = boost::algorithm::trim_copy(raw);
  InitialSpec spec;
  auto tail = [&](std::size_t prefix) { return boost::algorithm::trim_copy(v.substr(prefix)); };
  if (boost::algorithm::starts_with(v, "stem_only:")) {
    spec.kind = InitialSpec::Kind::stem_raw;
    spec.stem_count = to_int("model.initial_counts", tail(10));
  } else if (boost::algorithm::starts_with(v, "stem_scaled:")) {
    spec.kind = InitialSpec::Kind::stem_scaled;
    spec.stem_scaled = to_double("model.initial_counts", tail(12));
  } else {
    spec.kind = InitialSpec::Kind::explicit_counts;
    for (double c : to_doubles("model.initial_counts", v)) {
      if (c != std::floor(c)) throw ConfigError("initial_counts must be integers");
      spec.counts.push_back(static_cast<std::int64_t>(c));
    }
  }
  return spec;
}

std::string render_rate(const RateFunction& f) {
  std::ostringstream out;
  out << "family = " << f.family_name() << '\n';
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
  };
  if (const auto* c = std::get_if<ConstantRate>(&f.family())) out << "value = " << format_double(c->value) << '\n';
  if (const auto* a = std::get_if<AffineRate>(&f.family()))
    out << "base = " << format_double(a->base) << "\nslope_x = " << format_double(a->slope_x)
        << "\nslope_z = " << format_double(a->slope_z) << "\nz_saturation = " << format_double(a->z_saturation)
        << '\n';
  if (const auto* g = std::get_if<RegulatedRate>(&f.family()))
    out << "base = " << format_double(g->base) << "\nslope_x = " << format_double(g->slope_x)
        << "\nfeedback = " << format_double(g->feedback) << "\nfloor = " << format_double(g->floor)
        << "\nceiling = " << format_double(g->ceiling) << '\n';
  if (const auto* t = std::get_if<TabulatedRate>(&f.family()))
    out << "x_nodes = " << list(t->x_nodes) << "\nz_nodes = " << list(t->z_nodes) << "\nvalues = " << list(t->values)
        << '\n';
  return out.str();
}

}  // namespace

std::vector<std::int64_t> InitialSpec::counts_for(int n) const {
  if (n < 3) throw ConfigError("n_compartments must be >= 3");
  switch (kind) {
    case Kind::explicit_counts:
      if (static_cast<int>(counts.size()) != n)
        throw ConfigError("initial_counts has " + std::to_string(counts.size()) + " entries, expected " +
                          std::to_string(n));
      return counts;
    case Kind::stem_raw: {
      std::vector<std::int64_t> c(static_cast<std::size_t>(n), 0);
      c[0] = stem_count;
      return c;
    }
    case Kind::stem_scaled: {
      std::vector<std::int64_t> c(static_cast<std::size_t>(n), 0);
      c[0] = static_cast<std::int64_t>(std::llround(stem_scaled * n));
      return c;
    }
  }
  return {};
}

std::vector<double> uniform_samples(double horizon, std::size_t samples) {
  if (samples < 2) throw ConfigError("samples must be >= 2");
  std::vector<double> t(samples);
  for (std::size_t k = 0; k < samples; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(samples - 1);
  t.back() = horizon;
  return t;
}

void ModelConfig::validate() const {
  if (n_compartments < 3) throw ConfigError("n_compartments must be >= 3");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
  if (!(rates.death_rate >= 0.0)) throw ConfigError("death_rate must be >= 0");
  if (static_cast<int>(initial_counts.size()) != n_compartments)
    throw ConfigError("initial counts length does not match n_compartments");
  for (auto c : initial_counts)
    if (c < 0) throw ConfigError("initial counts must be non-negative");
  if (sample_times.empty()) throw ConfigError("sample grid is empty");
  for (std::size_t k = 0; k < sample_times.size(); ++k) {
    if (sample_times[k] < 0.0 || sample_times[k] > horizon) throw ConfigError("sample times must lie in [0, horizon]");
    if (k && !(sample_times[k] > sample_times[k - 1])) throw ConfigError("sample times must be increasing");
  }
  if (limit.cells < 2) throw ConfigError("limit.cells must be >= 2");
  if (!(limit.cfl > 0.0 && limit.cfl <= 1.0)) throw ConfigError("limit.cfl must lie in (0, 1]");
  if (!(limit.output_interval > 0.0)) throw ConfigError("limit.output_interval must be > 0");
  if (metric_nodes < 2) throw ConfigError("metric.nodes must be >= 2");
}

ModelConfig ModelConfig::with_compartments(int n) const {
  ModelConfig out = *this;
  out.n_compartments = n;
  out.initial_counts = initial.counts_for(n);
  return out;
}

ModelConfig reference_config(int n_compartments, double horizon, std::size_t samples) {
  ModelConfig c;
  c.n_compartments = n_compartments;
  c.horizon = horizon;
  c.rates.division = RateFunction::constant(0.015);
  c.rates.differentiation = RateFunction::constant(0.02);
  c.rates.death_rate = 0.005;
  c.rates.bounds = RateModel::derive_bounds(c.rates.division, c.rates.differentiation);
  c.initial.kind = InitialSpec::Kind::stem_raw;
  c.initial.stem_count = 50;
  c.initial_counts = c.initial.counts_for(n_compartments);
  c.sample_times = uniform_samples(horizon, samples);
  c.seed = 2024;
  return c;
}

ModelConfig parse_config(const std::string& text) {
  pt::ptree root;
  try {
    std::istringstream in(strip_comments(text));
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ModelConfig c;
  const Section model = section(root, "model");
  c.n_compartments = static_cast<int>(model.integer("n_compartments"));
  c.horizon = model.number("horizon");
  c.rates.death_rate = model.number("death_rate");
  c.seed = static_cast<std::uint64_t>(model.integer("seed", 1));
  c.initial = parse_initial(model.has("initial_counts") ? model.text("initial_counts") : "stem_only: 50");
  if (c.n_compartments < 3) throw ConfigError("n_compartments must be >= 3");
  c.initial_counts = c.initial.counts_for(c.n_compartments);
  c.sample_times = uniform_samples(c.horizon, static_cast<std::size_t>(model.integer("samples", 101)));

  c.rates.division = parse_rate(section(root, "division"), "division");
  c.rates.differentiation = parse_rate(section(root, "differentiation"), "differentiation");
  c.rates.bounds = RateModel::derive_bounds(c.rates.division, c.rates.differentiation);
  const Section bounds = section(root, "bounds");
  c.rates.bounds.r_hat = bounds.number("r_hat", c.rates.bounds.r_hat);
  c.rates.bounds.m_hat = bounds.number("m_hat", c.rates.bounds.m_hat);
  c.rates.bounds.m_min = bounds.number("m_min", c.rates.bounds.m_min);
  c.rates.bounds.lipschitz_r = bounds.number("lipschitz_r", c.rates.bounds.lipschitz_r);
  c.rates.bounds.lipschitz_m = bounds.number("lipschitz_m", c.rates.bounds.lipschitz_m);

  const Section limit = section(root, "limit");
  c.limit.cells = static_cast<int>(limit.integer("cells", c.limit.cells));
  c.limit.cfl = limit.number("cfl", c.limit.cfl);
  if (limit.has("dt")) c.limit.dt = limit.number("dt");
  if (limit.has("a0")) c.limit.a0 = limit.number("a0");
  if (limit.has("z0")) c.limit.z0 = limit.number("z0");
  c.limit.output_interval = limit.number("output_interval", c.limit.output_interval);
  if (limit.has("hold_stem")) {
    const std::string v = limit.text("hold_stem");
    if (v != "true" && v != "false") throw ConfigError("limit.hold_stem must be true or false");
    c.limit.hold_stem = v == "true";
  }
  c.metric_nodes = static_cast<int>(section(root, "metric").integer("nodes", c.metric_nodes));

  c.validate();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string render_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "[model]\nn_compartments = " << c.n_compartments << "\nhorizon = " << format_double(c.horizon)
      << "\ndeath_rate = " << format_double(c.rates.death_rate) << "\nseed = " << c.seed
      << "\nsamples = " << c.sample_times.size() << "\ninitial_counts = ";
  switch (c.initial.kind) {
    case InitialSpec::Kind::stem_raw: out << "stem_only: " << c.initial.stem_count; break;
    case InitialSpec::Kind::stem_scaled: out << "stem_scaled: " << format_double(c.initial.stem_scaled); break;
    case InitialSpec::Kind::explicit_counts:
      for (std::size_t i = 0; i < c.initial_counts.size(); ++i) out << (i ? "," : "") << c.initial_counts[i];
      break;
  }
  out << "\n\n[division]\n" << render_rate(c.rates.division) << "\n[differentiation]\n"
      << render_rate(c.rates.differentiation);
  const RateBounds& b = c.rates.bounds;
  out << "\n[bounds]\nr_hat = " << format_double(b.r_hat) << "\nm_hat = " << format_double(b.m_hat)
      << "\nm_min = " << format_double(b.m_min) << "\nlipschitz_r = " << format_double(b.lipschitz_r)
      << "\nlipschitz_m = " << format_double(b.lipschitz_m) << '\n';
  out << "\n[limit]\ncells = " << c.limit.cells << "\ncfl = " << format_double(c.limit.cfl) << '\n';
  if (c.limit.dt) out << "dt = " << format_double(*c.limit.dt) << '\n';
  if (c.limit.a0) out << "a0 = " << format_double(*c.limit.a0) << '\n';
  if (c.limit.z0) out << "z0 = " << format_double(*c.limit.z0) << '\n';
  out << "output_interval = " << format_double(c.limit.output_interval)
      << "\nhold_stem = " << (c.limit.hold_stem ? "true" : "false") << '\n';
  out << "\n[metric]\nnodes = " << c.metric_nodes << '\n';
  return out.str();
}

}  // namespace hemalimit
