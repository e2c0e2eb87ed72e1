// Verifies that every test and source file referenced by the trace map exists.
// usage: check_trace_map <trace_map.json> <tests dir>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: check_trace_map <trace_map.json> <tests dir>\n";
    return 2;
  }
  const fs::path map_path = argv[1], tests_dir = argv[2];
  const fs::path root = tests_dir.parent_path();

  std::set<std::string> tests;
  const std::regex decl(R"(TEST(?:_F|_P)?\(\s*(\w+)\s*,\s*(\w+)\s*\))");
  for (const auto& e : fs::recursive_directory_iterator(tests_dir)) {
    if (e.path().extension() != ".cc") continue;
    std::ifstream in(e.path());
    std::stringstream text;
    text << in.rdbuf();
    const std::string s = text.str();
    for (std::sregex_iterator it(s.begin(), s.end(), decl), end; it != end; ++it) {
      tests.insert((*it)[1].str() + "." + (*it)[2].str());
    }
  }

  nlohmann::json map;
  try {
    std::ifstream in(map_path);
    map = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "cannot parse " << map_path << ": " << e.what() << "\n";
    return 1;
  }

  int problems = 0, entries = 0;
  for (const auto& entry : map.at("entries")) {
    ++entries;
    const std::string id = entry.at("id").get<std::string>();
    for (const auto& t : entry.value("tests", nlohmann::json::array())) {
      if (!tests.contains(t.get<std::string>())) {
        std::cerr << id << ": unknown test " << t << "\n";
        ++problems;
      }
    }
    for (const auto& f : entry.value("code", nlohmann::json::array())) {
      if (!fs::exists(root / f.get<std::string>())) {
        std::cerr << id << ": missing file " << f << "\n";
        ++problems;
      }
    }
    for (const auto& c : entry.value("acceptance", nlohmann::json::array())) {
      if (c.get<int>() < 1 || c.get<int>() > 9) {
        std::cerr << id << ": acceptance criterion out of range " << c << "\n";
        ++problems;
      }
    }
  }
  std::cout << entries << " entries, " << tests.size() << " tests found, " << problems << " problems\n";
  return problems == 0 && entries > 0 ? 0 : 1;
}
