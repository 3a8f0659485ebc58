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

#include "groundkit/dataset.hpp"

#include "groundkit/binary_io.hpp"
#include "groundkit/error.hpp"

#include <charconv>

namespace groundkit {

namespace {

struct CsvRecord {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

auto parse_error(std::string_view source, std::size_t line, const std::string& what) -> DataError
{
    return DataError(std::string(source) + ": line " + std::to_string(line) + ": " + what);
}

auto split_records(std::string_view content, std::string_view source) -> std::vector<CsvRecord>
{
    std::vector<CsvRecord> records;
    std::size_t line = 1;
    std::size_t pos = 0;
    while (pos < content.size()) {
        CsvRecord rec;
        rec.line = line;
        std::string field;
        bool done = false;
        while (!done) {
            field.clear();
            if (pos < content.size() && content[pos] == '"') {
                ++pos;
                for (;;) {
                    if (pos >= content.size()) {
                        throw parse_error(source, rec.line, "unterminated quoted field");
                    }
                    const char c = content[pos++];
                    if (c == '"') {
                        if (pos < content.size() && content[pos] == '"') {
                            field.push_back('"');
                            ++pos;
                        } else {
                            break;
                        }
                    } else {
                        if (c == '\n') {
                            ++line;
                        }
                        field.push_back(c);
                    }
                }
                if (pos < content.size() && content[pos] != ',' && content[pos] != '\n'
                    && content[pos] != '\r') {
                    throw parse_error(source, line, "unexpected character after closing quote");
                }
            } else {
                while (pos < content.size() && content[pos] != ',' && content[pos] != '\n'
                       && content[pos] != '\r') {
                    if (content[pos] == '"') {
                        throw parse_error(source, line, "quote inside an unquoted field");
                    }
                    field.push_back(content[pos++]);
                }
            }
            rec.fields.push_back(field);
            if (pos < content.size() && content[pos] == ',') {
                ++pos;
                continue;
            }
            if (pos < content.size() && content[pos] == '\r') {
                ++pos;
            }
            if (pos < content.size() && content[pos] == '\n') {
                ++pos;
            }
            ++line;
            done = true;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

auto needs_quotes(std::string_view text) -> bool
{
    return text.find_first_of(",\"\r\n") != std::string_view::npos;
}

} // namespace

auto parse_dataset_csv(std::string_view content, std::string_view source) -> std::vector<LabeledText>
{
    const auto records = split_records(content, source);
    if (records.empty()) {
        throw parse_error(source, 1, "missing header \"label,text\"");
    }
    if (records[0].fields != std::vector<std::string> { "label", "text" }) {
        throw parse_error(source, 1, "header must be \"label,text\"");
    }
    std::vector<LabeledText> rows;
    rows.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.fields.size() == 1 && rec.fields[0].empty()) {
            continue; // blank line
        }
        if (rec.fields.size() != 2) {
            throw parse_error(source, rec.line,
                              "expected 2 fields, found " + std::to_string(rec.fields.size()));
        }
        const std::string& label = rec.fields[0];
        std::size_t value = 0;
        const auto [end, ec] = std::from_chars(label.data(), label.data() + label.size(), value);
        if (label.empty() || ec != std::errc {} || end != label.data() + label.size()) {
            throw parse_error(source, rec.line,
                              "label '" + label + "' is not a non-negative integer");
        }
        rows.push_back({ value, rec.fields[1], rec.line });
    }
    return rows;
}

auto format_dataset_csv(std::span<const LabeledText> rows) -> std::string
{
    std::string out = "label,text\n";
    for (const auto& row : rows) {
        out += std::to_string(row.label);
        out.push_back(',');
        if (needs_quotes(row.text)) {
            out.push_back('"');
            for (char c : row.text) {
                if (c == '"') {
                    out.push_back('"');
                }
                out.push_back(c);
            }
            out.push_back('"');
        } else {
            out += row.text;
        }
        out.push_back('\n');
    }
    return out;
}

auto load_dataset(const std::filesystem::path& path) -> std::vector<LabeledText>
{
    return parse_dataset_csv(binary::read_file(path), path.string());
}

void write_dataset(const std::filesystem::path& path, std::span<const LabeledText> rows)
{
    binary::write_file(path, format_dataset_csv(rows));
}

} // namespace groundkit
