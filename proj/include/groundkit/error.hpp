// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace groundkit {

/// Base of every error thrown by the library. The CLI maps the
/// subclasses onto its exit-code taxonomy.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values or combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Index outside its admissible range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A named entity (parameter block, feature) does not exist.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Input records violate the grounding feature schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Malformed user data (datasets, feature files, labels).
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or header payload. Carries the byte offset where
/// parsing gave up.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")")
        , offset_(offset)
    {
    }

    [[nodiscard]] auto offset() const noexcept -> std::size_t { return offset_; }

private:
    std::size_t offset_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace groundkit
