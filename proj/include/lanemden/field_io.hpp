#ifndef LANEMDEN_FIELD_IO_HPP
#define LANEMDEN_FIELD_IO_HPP

#include "lanemden/radial_field.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace lanemden {

/// Fixed 17-significant-digit decimal rendering used for every float we emit.
std::string format_double(double value);

/// Writes a field as
///   # {json header: dimension, grid span, origin model, tail model}
///   rho,value
///   <rho>,<value>        (one row per node, LF line endings)
void write_field_csv(std::ostream& out, const RadialField& field);
RadialField read_field_csv(std::istream& in);

void save_field(const std::filesystem::path& path, const RadialField& field);
RadialField load_field(const std::filesystem::path& path);

}  // namespace lanemden

#endif  // LANEMDEN_FIELD_IO_HPP
