#ifndef EVROT_KEY_VALUE_HPP
#define EVROT_KEY_VALUE_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "evrot/camera.hpp"
#include "evrot/errors.hpp"

namespace evrot {

/// Plain-text `key value` file, one pair per line. Blank lines and lines
/// starting with '#' are ignored. Used for camera calibrations, pipeline
/// configs and metric reports.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(std::istream& in, const std::string& origin = "<stream>") {
    KeyValueFile kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::istringstream ls(line);
      std::string key, value, extra;
      if (!(ls >> key)) continue;
      if (key[0] == '#') continue;
      if (!(ls >> value) || (ls >> extra)) {
        throw ParseError(origin + ":" + std::to_string(lineno) +
                         ": expected `key value`, got: " + line);
      }
      kv.values_[key] = value;
    }
    return kv;
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  double get_double(const std::string& key) const {
    const std::string& s = at(key);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw ParseError("key `" + key + "`: not a number: " + s);
    }
    return v;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long get_int(const std::string& key) const {
    const std::string& s = at(key);
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw ParseError("key `" + key + "`: not an integer: " + s);
    }
    return v;
  }

  long get_int(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::string get_string(const std::string& key) const { return at(key); }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? at(key) : fallback;
  }

 private:
  const std::string& at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ParseError("missing key: " + key);
    return it->second;
  }

  std::map<std::string, std::string> values_;
};

/// Calibration file keys: fx fy cx cy k1 k2 p1 p2 k3 width height.
inline CameraModel load_camera(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  CameraModel m;
  m.fx = kv.get_double("fx");
  m.fy = kv.get_double("fy");
  m.cx = kv.get_double("cx");
  m.cy = kv.get_double("cy");
  m.k1 = kv.get_double("k1", 0.0);
  m.k2 = kv.get_double("k2", 0.0);
  m.p1 = kv.get_double("p1", 0.0);
  m.p2 = kv.get_double("p2", 0.0);
  m.k3 = kv.get_double("k3", 0.0);
  m.width = static_cast<int>(kv.get_int("width"));
  m.height = static_cast<int>(kv.get_int("height"));
  m.validate();
  return m;
}

inline void save_camera(const CameraModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "fx %.17g\nfy %.17g\ncx %.17g\ncy %.17g\n"
                "k1 %.17g\nk2 %.17g\np1 %.17g\np2 %.17g\nk3 %.17g\n"
                "width %d\nheight %d\n",
                m.fx, m.fy, m.cx, m.cy, m.k1, m.k2, m.p1, m.p2, m.k3, m.width,
                m.height);
  out << buf;
}

}  // namespace evrot

#endif  // EVROT_KEY_VALUE_HPP
