#include "invreg/hierarchy_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "invreg/errors.hpp"
#include "invreg/image_io.hpp"

namespace invreg {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double number(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("hierarchy key '" + key + "': not a number: '" + v + "'");
  return d;
}

int integer(const std::string& key, const std::string& v) {
  const double d = number(key, v);
  if (d != static_cast<int>(d)) throw ConfigError("hierarchy key '" + key + "': not an integer: '" + v + "'");
  return static_cast<int>(d);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string resolve(const std::string& base, const std::string& p) {
  std::filesystem::path q(p);
  if (q.is_relative() && !base.empty()) q = std::filesystem::path(base) / q;
  return q.lexically_normal().string();
}

}  // namespace

bool set_node_param(NodeParams& p, const std::string& key, const std::string& v) {
  if (key == "iters") p.iters = integer(key, v);
  else if (key == "fine_iters") p.fine_iters = integer(key, v);
  else if (key == "fine_sigma2") p.fine_sigma2 = number(key, v);
  else if (key == "stride") p.stride_h = p.stride_w = integer(key, v);
  else if (key == "stride_h") p.stride_h = integer(key, v);
  else if (key == "stride_w") p.stride_w = integer(key, v);
  else if (key == "sigma2") p.sigma2 = number(key, v);
  else if (key == "sigma0_2") p.sigma0_2 = number(key, v);
  else if (key == "input_sigma2") p.input_sigma2 = number(key, v);
  else if (key == "alpha") p.alpha = number(key, v);
  else if (key == "gamma") p.gamma = number(key, v);
  else if (key == "step_scale") p.step_scale = number(key, v);
  else if (key == "prescreen_fraction") p.prescreen_fraction = number(key, v);
  else if (key == "merge_radius") p.merge_radius = number(key, v);
  else if (key == "prescreen") {
    if (v == "true" || v == "1") p.prescreen = true;
    else if (v == "false" || v == "0") p.prescreen = false;
    else throw ConfigError("hierarchy key 'prescreen': not a boolean: '" + v + "'");
  } else {
    return false;
  }
  return true;
}

Hierarchy parse_hierarchy(const std::string& text, const std::string& base_dir) {
  struct Entry {
    HierarchyNode node;
    int parent = -1;
    bool has_parent = false;
  };
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "hierarchy line " + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.rfind("[node ", 0) != 0) throw ConfigError(where + "expected '[node <id>]'");
      Entry e;
      e.node.id = integer("node", trim(line.substr(6, line.size() - 7)));
      entries.push_back(std::move(e));
      continue;
    }
    if (entries.empty()) throw ConfigError(where + "key outside a [node] section");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    Entry& e = entries.back();
    if (key == "parent") {
      e.has_parent = true;
      e.parent = value == "none" ? -1 : integer(key, value);
    } else if (key == "motif") {
      e.node.motif = read_image(resolve(base_dir, value));
    } else if (key == "mask") {
      e.node.mask = read_mask(resolve(base_dir, value));
    } else if (key == "center") {
      std::istringstream cs(value);
      std::string a, b, rest;
      if (!(cs >> a >> b) || (cs >> rest)) throw ConfigError(where + "center needs two numbers");
      e.node.canonical_center = Eigen::Vector2d(number(key, a), number(key, b));
    } else if (!set_node_param(e.node.params, key, value)) {
      throw ConfigError(where + "unknown hierarchy key '" + key + "'");
    }
  }
  for (const Entry& e : entries)
    if (!e.has_parent) throw ConfigError("node " + std::to_string(e.node.id) + ": missing parent line");
  std::vector<HierarchyNode> nodes;
  for (const Entry& e : entries) {
    HierarchyNode n = e.node;
    for (const Entry& c : entries)
      if (c.parent == n.id) n.children.push_back(c.node.id);
    nodes.push_back(std::move(n));
  }
  for (const Entry& e : entries) {
    if (e.parent < 0) continue;
    bool found = false;
    for (const Entry& o : entries) found = found || o.node.id == e.parent;
    if (!found) throw ConfigError("node " + std::to_string(e.node.id) + ": unknown parent " + std::to_string(e.parent));
  }
  return Hierarchy(std::move(nodes));
}

Hierarchy read_hierarchy(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read hierarchy file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_hierarchy(ss.str(), std::filesystem::absolute(path).parent_path().string());
}

void write_hierarchy(const std::string& path, const Hierarchy& h) {
  const std::filesystem::path dir = std::filesystem::absolute(path).parent_path();
  std::filesystem::create_directories(dir);
  std::ostringstream os;
  for (const HierarchyNode& n : h.nodes()) {
    const NodeParams& p = n.params;
    const std::string id = std::to_string(n.id);
    os << "[node " << id << "]\n";
    os << "parent = " << (n.id == h.root() ? std::string("none") : std::to_string(h.parent(n.id))) << "\n";
    if (n.motif.rows() > 0) {
      write_raw((dir / ("node" + id + "_motif.raw")).string(), n.motif);
      os << "motif = node" << id << "_motif.raw\n";
    }
    if (n.mask.rows() > 0) {
      write_png((dir / ("node" + id + "_mask.png")).string(), n.mask.as_image());
      os << "mask = node" << id << "_mask.png\n";
    }
    os << "center = " << num(n.canonical_center(0)) << " " << num(n.canonical_center(1)) << "\n";
    os << "iters = " << p.iters << "\nfine_iters = " << p.fine_iters << "\nfine_sigma2 = " << num(p.fine_sigma2)
       << "\nstride_h = " << p.stride_h << "\nstride_w = " << p.stride_w << "\nsigma2 = " << num(p.sigma2)
       << "\nsigma0_2 = " << num(p.sigma0_2) << "\ninput_sigma2 = " << num(p.input_sigma2)
       << "\nalpha = " << num(p.alpha) << "\ngamma = " << num(p.gamma) << "\nstep_scale = " << num(p.step_scale)
       << "\nprescreen = " << (p.prescreen ? "true" : "false")
       << "\nprescreen_fraction = " << num(p.prescreen_fraction) << "\nmerge_radius = " << num(p.merge_radius)
       << "\n\n";
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write hierarchy file '" + path + "'");
  f << os.str();
}

}  // namespace invreg
