#pragma once

#include <fstream>
#include <sstream>
#include <string>

inline std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string model_path(const std::string& name) {
  return std::string(MOBNET_SOURCE_DIR) + "/models/" + name;
}

inline std::string load_model_text(const std::string& name) {
  return read_file(model_path(name));
}
