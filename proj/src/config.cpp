#include "pnn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void cfg_fail(const std::string& origin, std::size_t line,
                           const std::string& what) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " +
                              what);
}

double to_double(const std::string& v, const std::string& origin,
                 std::size_t line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    cfg_fail(origin, line, "expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& origin,
                     std::size_t line) {
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::size_t pos = 0;
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    cfg_fail(origin, line, "expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& origin,
             std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  cfg_fail(origin, line, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_double_list(const std::string& v,
                                   const std::string& origin,
                                   std::size_t line) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(item, origin, line));
  return out;
}

std::vector<std::size_t> to_size_list(const std::string& v,
                                      const std::string& origin,
                                      std::size_t line) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v))
    out.push_back(static_cast<std::size_t>(to_u64(item, origin, line)));
  return out;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text,
                                const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') cfg_fail(origin, lineno, "unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      cfg_fail(origin, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qual = "[" + section + "] " + key;

    auto unknown = [&]() -> void {
      cfg_fail(origin, lineno, "unknown key '" + qual + "'");
    };

    if (section == "dataset") {
      if (key == "train_images") cfg.train_images = value;
      else if (key == "train_labels") cfg.train_labels = value;
      else if (key == "test_images") cfg.test_images = value;
      else if (key == "test_labels") cfg.test_labels = value;
      else if (key == "ood_images") cfg.ood_images = value;
      else if (key == "ood_labels") cfg.ood_labels = value;
      else unknown();
    } else if (section == "model") {
      if (key == "arch") cfg.arch = value;
      else unknown();
    } else if (section == "train") {
      if (key == "batch_size") cfg.train.batch_size = to_u64(value, origin, lineno);
      else if (key == "max_iterations") cfg.train.max_iterations = to_u64(value, origin, lineno);
      else if (key == "lr") cfg.train.lr = to_double(value, origin, lineno);
      else if (key == "eval_every") cfg.train.eval_every = to_u64(value, origin, lineno);
      else unknown();
    } else if (section == "pnn") {
      if (key == "pi1") cfg.pnn.pi1 = to_double(value, origin, lineno);
      else if (key == "pi2") cfg.pnn.pi2 = to_double(value, origin, lineno);
      else if (key == "siblings") cfg.pnn.n_train_samples = to_u64(value, origin, lineno);
      else if (key == "lr") cfg.pnn.lr = to_double(value, origin, lineno);
      else if (key == "batch_size") cfg.pnn.batch_size = to_u64(value, origin, lineno);
      else if (key == "max_iterations") cfg.pnn.max_iterations = to_u64(value, origin, lineno);
      else if (key == "stop_window") cfg.pnn.stop_window = to_u64(value, origin, lineno);
      else if (key == "stop_tol") cfg.pnn.stop_tol = to_double(value, origin, lineno);
      else if (key == "perturb_biases") cfg.pnn.perturb_biases = to_bool(value, origin, lineno);
      else if (key == "noise_groups") cfg.pnn.noise_groups = to_u64(value, origin, lineno);
      else unknown();
    } else if (section == "eval") {
      if (key == "siblings") cfg.eval_siblings = to_u64(value, origin, lineno);
      else if (key == "eps_stab") cfg.eps_stab = to_double(value, origin, lineno);
      else if (key == "scorers") cfg.scorers = split_list(value);
      else if (key == "odin_temperatures") cfg.odin_temperatures = to_double_list(value, origin, lineno);
      else if (key == "odin_eps") cfg.odin_eps = to_double_list(value, origin, lineno);
      else if (key == "fixed_scale") cfg.fixed_scale = to_double(value, origin, lineno);
      else if (key == "batch_size") cfg.eval_batch_size = to_u64(value, origin, lineno);
      else unknown();
    } else if (section == "metrics") {
      if (key == "positive") cfg.metrics_positive = value;
      else if (key == "tpr_target") cfg.tpr_target = to_double(value, origin, lineno);
      else unknown();
    } else if (section == "attack") {
      if (key == "epsilons") cfg.attack_epsilons = to_double_list(value, origin, lineno);
      else if (key == "clip_lo") cfg.attack_clip_lo = to_double(value, origin, lineno);
      else if (key == "clip_hi") cfg.attack_clip_hi = to_double(value, origin, lineno);
      else unknown();
    } else if (section == "corrupt") {
      if (key == "kind") cfg.corrupt_kind = value;
      else if (key == "severity") cfg.corrupt_severity = to_double(value, origin, lineno);
      else if (key == "clip_lo") cfg.corrupt_clip_lo = to_double(value, origin, lineno);
      else if (key == "clip_hi") cfg.corrupt_clip_hi = to_double(value, origin, lineno);
      else unknown();
    } else if (section == "diagnose") {
      if (key == "samples") cfg.diagnose_samples = to_u64(value, origin, lineno);
      else if (key == "t_grid_size") cfg.t_grid_size = to_u64(value, origin, lineno);
      else if (key == "sibling_counts") cfg.sibling_counts = to_size_list(value, origin, lineno);
      else if (key == "histogram_bins") cfg.histogram_bins = to_u64(value, origin, lineno);
      else unknown();
    } else if (section == "run") {
      if (key == "seed") cfg.seed = to_u64(value, origin, lineno);
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "precision") cfg.precision = value;
      else unknown();
    } else {
      cfg_fail(origin, lineno, "unknown key '" + qual + "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

void RunConfig::validate() const {
  if (arch != "c1" && arch != "c1_small" && arch != "mlp")
    throw std::invalid_argument("config: unknown arch '" + arch +
                                "' (expected c1, c1_small or mlp)");
  if (precision != "narrow" && precision != "wide")
    throw std::invalid_argument("config: precision must be narrow or wide");
  if (metrics_positive != "id" && metrics_positive != "ood")
    throw std::invalid_argument("config: metrics positive must be id or ood");
  if (corrupt_kind != "gaussian" && corrupt_kind != "speckle")
    throw std::invalid_argument(
        "config: corrupt kind must be gaussian or speckle");
  if (tpr_target <= 0 || tpr_target > 1)
    throw std::invalid_argument("config: tpr_target must be in (0,1]");
  train.validate();
  pnn.validate();
}

}  // namespace pnn
