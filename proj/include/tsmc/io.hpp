// Copyright 2026 The tsmc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TSMC_IO_HPP
#define TSMC_IO_HPP

#include <filesystem>
#include <string>

namespace tsmc {

/// Writes `content` to a sibling temporary file and renames it into place,
/// so readers see either the complete file or nothing. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace tsmc

#endif  // TSMC_IO_HPP
