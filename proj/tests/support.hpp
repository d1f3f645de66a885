#ifndef LYMPHNET_TEST_SUPPORT_HPP
#define LYMPHNET_TEST_SUPPORT_HPP

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lymphnet/rng.hpp"
#include "lymphnet/tensor.hpp"

namespace testsupport {

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

template <typename T>
lymphnet::Tensor<T> random_tensor(std::vector<std::size_t> shape, lymphnet::rng::Engine& eng,
                                  double lo = -1.0, double hi = 1.0) {
    lymphnet::Tensor<T> t(std::move(shape));
    for (auto& v : t) v = static_cast<T>(lymphnet::rng::uniform(eng, lo, hi));
    return t;
}

// Central differences of a scalar functional with respect to one tensor.
template <typename Fn>
lymphnet::Tensor<double> finite_diff(lymphnet::Tensor<double>& x, double eps, Fn&& f) {
    lymphnet::Tensor<double> g(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double up = f();
        x[i] = keep - eps;
        const double dn = f();
        x[i] = keep;
        g[i] = (up - dn) / (2 * eps);
    }
    return g;
}

// Fresh directory under the ctest working dir; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::absolute("tmp_" + tag + "_" + std::to_string(++counter));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr combined
};

// Runs a shell command, capturing combined output.
inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = pclose(pipe);
    r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace testsupport

#endif
