#include "lanemden/field_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace lanemden {

namespace {

constexpr const char* kFormatTag = "lanemden-radial-field";

double parse_double(const std::string& text, std::size_t line) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw FieldError("line " + std::to_string(line) + ": cannot parse number '" + text + "'");
  }
  return value;
}

// JSON has no infinities; a singular origin is written as null.
nlohmann::json number_or_null(double value) {
  if (std::isfinite(value)) return value;
  return nullptr;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_field_csv(std::ostream& out, const RadialField& field) {
  field.validate();
  nlohmann::ordered_json header;
  header["format"] = kFormatTag;
  header["version"] = 1;
  header["dimension"] = field.dimension();
  header["points"] = field.size();
  header["rho_min"] = field.grid.front();
  header["rho_max"] = field.grid.back();
  header["log_step"] = field.grid.log_step();
  header["value_at_zero"] = number_or_null(field.value_at_zero);
  header["origin_power"] = field.origin_power;
  header["nonnegative"] = field.nonnegative;
  header["tail"] = {{"amplitude", field.tail.amplitude},
                    {"exponent", field.tail.exponent},
                    {"log_power", field.tail.log_power}};
  out << "# " << header.dump() << '\n';
  out << "rho,value\n";
  for (Index i = 0; i < field.size(); ++i) {
    out << format_double(field.grid[i]) << ',' << format_double(field.values[i]) << '\n';
  }
}

RadialField read_field_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw FieldError("field CSV must start with a '# {json}' header line");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line.substr(2));
  } catch (const nlohmann::json::exception& e) {
    throw FieldError(std::string("field CSV header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != kFormatTag) throw FieldError("unrecognised field CSV format tag");

  if (!std::getline(in, line) || line != "rho,value") throw FieldError("expected column header 'rho,value'");

  std::vector<double> rho;
  std::vector<double> values;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FieldError("line " + std::to_string(line_no) + ": expected two columns");
    rho.push_back(parse_double(line.substr(0, comma), line_no));
    values.push_back(parse_double(line.substr(comma + 1), line_no));
  }

  try {
    const auto points = header.at("points").get<std::size_t>();
    if (points != rho.size()) {
      throw FieldError("header declares " + std::to_string(points) + " points, found " + std::to_string(rho.size()));
    }
    RadialField field;
    field.grid = RadialGrid::from_nodes(Eigen::Map<const Eigen::VectorXd>(rho.data(), static_cast<Index>(rho.size())),
                                        header.at("dimension").get<int>());
    field.values = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
    const auto& at_zero = header.at("value_at_zero");
    field.value_at_zero = at_zero.is_null() ? std::numeric_limits<double>::infinity() : at_zero.get<double>();
    field.origin_power = header.at("origin_power").get<double>();
    field.nonnegative = header.at("nonnegative").get<bool>();
    const auto& tail = header.at("tail");
    field.tail = {tail.at("amplitude").get<double>(), tail.at("exponent").get<double>(),
                  tail.at("log_power").get<double>()};
    field.validate();
    return field;
  } catch (const nlohmann::json::exception& e) {
    throw FieldError(std::string("field CSV header: ") + e.what());
  }
}

void save_field(const std::filesystem::path& path, const RadialField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_field_csv(out, field);
}

RadialField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_field_csv(in);
}

}  // namespace lanemden
