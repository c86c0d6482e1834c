// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <string_view>

namespace ndif {

// Shortest representation that round-trips exactly.
std::string format_double(double v);
void put_double(std::ostream& out, double v);
// Throws DataError mentioning `where` on malformed input.
double parse_double(std::string_view field, const std::string& where);

std::ofstream open_for_write(const std::filesystem::path& path);
std::ifstream open_for_read(const std::filesystem::path& path);

}  // namespace ndif
