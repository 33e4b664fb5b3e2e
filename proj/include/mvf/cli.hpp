#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvf/function.hpp"

namespace mvf::cli {

using nlohmann::json;

enum Exit : int { exit_ok = 0, exit_malformed = 1, exit_numerical = 2, exit_io = 3 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Job {
    std::string command;
    json inputs = json::object();
    json grid;  // optional polar grid for emit_grid
    std::string out_dir;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    bool verbose = false;
};

const std::vector<std::string>& commands();

// Validates schema, command and the inputs subtree type; throws SpecError.
// Values from the command line override those in the spec file.
Job make_job(const std::string& command, const json& spec, const std::string& out_dir);

struct GridSpec {
    std::vector<double> radii{0.25, 0.5, 0.75, 0.9};
    int angles = 16;
    double offset = 0;

    static GridSpec from_json(const json& j);  // null gives the default
};

// r, phi, a11_re, a11_im, ..., norm, unitarity_residual, absdet
void emit_grid(const MatrixFunction& A, const GridSpec& grid, const std::string& path);

std::string fmt(double x);   // 17 significant digits
int max_threads();           // MVFTOOL_MAX_THREADS, default hardware concurrency

// Runs a job and writes report.json plus artifacts into out_dir.
int run(const Job& job, std::ostream& log);

// Full command-line entry point.
int main(int argc, char** argv);

}  // namespace mvf::cli
