#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flockd/analysis.hpp"

namespace flockd::cli {

using ojson = nlohmann::ordered_json;

// Shortest decimal that round-trips; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double x);

// JSON number, or a string for non-finite values.
ojson json_number(double x);

class CsvWriter {
 public:
  // Writes the schema line (prefixed with "# ") and the column header.
  CsvWriter(const std::filesystem::path& path, const std::string& schema,
            const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::size_t width_;
};

// Pretty JSON with a trailing newline; the caller puts "schema" first.
void write_json(const std::filesystem::path& path, const ojson& j);

ojson to_json(const BoundsReport& r);
ojson to_json(const InvariantSummary& s);
ojson to_json(const DecayFit& f);
ojson to_json(const IntegrationResult& r);
ojson to_json(const FlockingMetrics& m);
ojson to_json(const EnvelopeResult& r);
ojson vector_json(const std::vector<double>& v);

}  // namespace flockd::cli
