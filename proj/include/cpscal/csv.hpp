#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cpscal/errors.hpp"

namespace cpscal {

/// Deterministic CSV writer: fixed %.*g formatting so identical inputs give
/// byte-identical files.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::string& header) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path);
        if (!out_) fail(ErrorCode::ConfigError, "cannot write " + path.string());
        out_ << header << '\n';
    }

    CsvWriter& field(const std::string& s) {
        sep();
        out_ << s;
        return *this;
    }

    CsvWriter& field(double v, int precision = 10) {
        sep();
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
        out_ << buf;
        return *this;
    }

    CsvWriter& field(int v) {
        sep();
        out_ << v;
        return *this;
    }

    CsvWriter& field(long v) {
        sep();
        out_ << v;
        return *this;
    }

    void end_row() {
        out_ << '\n';
        row_open_ = false;
    }

  private:
    void sep() {
        if (row_open_) out_ << ',';
        row_open_ = true;
    }

    std::ofstream out_;
    bool row_open_ = false;
};

}  // namespace cpscal
