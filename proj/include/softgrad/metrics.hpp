#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "softgrad/error.hpp"

namespace softgrad {

using Json = nlohmann::json;

/// Append-only JSONL stream, one record per line. nlohmann::json keeps keys
/// sorted and prints shortest round-trip doubles, so identical runs produce
/// byte-identical files.
class JsonlWriter {
  public:
    explicit JsonlWriter(const std::string& path) : out_(path, std::ios::trunc) {
        if (!out_) throw ConfigError("cannot open metrics file for writing: " + path);
    }

    void write(const Json& record) {
        out_ << record.dump() << '\n';
        out_.flush();
    }

  private:
    std::ofstream out_;
};

inline std::vector<Json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics file: " + path);
    std::vector<Json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(Json::parse(line));
    }
    return records;
}

}  // namespace softgrad
