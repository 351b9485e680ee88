// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace flowplan {

std::string sha256_hex(std::string_view bytes);

/// SHA-1 of "blob <size>\0<bytes>", the identifier git assigns to file content.
std::string git_blob_hash(std::string_view bytes);

std::string read_file(const std::string& path);

}  // namespace flowplan
