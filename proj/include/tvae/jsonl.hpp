#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvae/errors.hpp"

namespace tvae {

/// Parses a JSON-lines file with `parse(json) -> T`, skipping blank lines.
/// JSON and schema problems are rethrown as MalformedLine.
template <class T, class F>
std::vector<T> read_jsonl(const std::filesystem::path& path, F&& parse) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedLine(line_no, e.what());
    } catch (const SchemaError& e) {
      throw MalformedLine(line_no, e.what());
    }
  }
  return out;
}

}  // namespace tvae
