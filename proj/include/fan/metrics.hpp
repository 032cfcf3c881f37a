#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "fan/errors.hpp"

namespace fan {

// Shortest exact decimal for a double; reruns must produce byte-identical
// metrics files, so all numeric output funnels through here.
inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt(int v) {
    return std::to_string(v);
}

inline std::string fmt(long v) {
    return std::to_string(v);
}

class CsvFile {
public:
    CsvFile(const std::string& path, const std::vector<std::string>& header) {
        f_ = std::fopen(path.c_str(), "w");
        if (!f_) {
            throw IoError("csv: cannot open " + path + " for writing");
        }
        write_row(header);
    }

    ~CsvFile() {
        if (f_) {
            std::fclose(f_);
        }
    }

    CsvFile(const CsvFile&) = delete;
    CsvFile& operator=(const CsvFile&) = delete;

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            std::fputs(cells[i].c_str(), f_);
            std::fputc(i + 1 < cells.size() ? ',' : '\n', f_);
        }
    }

    void flush() { std::fflush(f_); }

private:
    std::FILE* f_ = nullptr;
};

}  // namespace fan
