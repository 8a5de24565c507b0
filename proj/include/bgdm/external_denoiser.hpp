#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "bgdm/prior.hpp"
#include "bgdm/tensor_io.hpp"

namespace bgdm {

/// File-fed denoiser: epsilon predictions served either from a directory of
/// precomputed per-timestep tensors (eps_t<t>.ntsr) or from a child process
/// speaking the tensor format over standard streams.
///
/// Child protocol, synchronous request/response per call:
///   request:  u32 t (little-endian) followed by one tensor record
///   response: one tensor record of the same shape
///
/// Handles are single-owner; concurrent sampling runs use separate handles.
class ExternalDenoiser final : public ScoreModel {
public:
    /// Directory mode.
    static ExternalDenoiser from_directory(std::string dir) {
        ExternalDenoiser d;
        d.dir_ = std::move(dir);
        return d;
    }

    /// Child-process mode; argv[0] is the executable path.
    static ExternalDenoiser spawn(const std::vector<std::string>& argv,
                                  int timeout_ms = 10000) {
        if (argv.empty()) throw parameter_error("ExternalDenoiser: empty command");
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw external_model_error("ExternalDenoiser: pipe() failed");
        const pid_t pid = fork();
        if (pid < 0) throw external_model_error("ExternalDenoiser: fork() failed");
        if (pid == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            std::vector<char*> args;
            for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
            args.push_back(nullptr);
            execvp(args[0], args.data());
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        ExternalDenoiser d;
        d.pid_ = pid;
        d.write_fd_ = to_child[1];
        d.read_fd_ = from_child[0];
        d.timeout_ms_ = timeout_ms;
        return d;
    }

    ExternalDenoiser(ExternalDenoiser&& o) noexcept { *this = std::move(o); }
    ExternalDenoiser& operator=(ExternalDenoiser&& o) noexcept {
        close_handles();
        dir_ = std::move(o.dir_);
        pid_ = o.pid_;
        write_fd_ = o.write_fd_;
        read_fd_ = o.read_fd_;
        timeout_ms_ = o.timeout_ms_;
        o.pid_ = -1;
        o.write_fd_ = o.read_fd_ = -1;
        return *this;
    }
    ExternalDenoiser(const ExternalDenoiser&) = delete;
    ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;

    ~ExternalDenoiser() { close_handles(); }

    CTensor epsilon(const CTensor& x_t, std::size_t t) const override {
        CTensor eps = dir_.empty() ? query_process(x_t, t) : query_directory(x_t, t);
        if (!eps.same_shape(x_t))
            throw external_model_error("external denoiser: response shape mismatch");
        if (!eps.all_finite())
            throw external_model_error("external denoiser: non-finite response");
        return eps;
    }

private:
    ExternalDenoiser() = default;

    CTensor query_directory(const CTensor& x_t, std::size_t t) const {
        const std::string path = dir_ + "/eps_t" + std::to_string(t) + ".ntsr";
        try {
            if (tensor_file_dtype(path) == 1) return load_tensor<cdouble>(path);
            return to_complex(load_tensor<double>(path));
        } catch (const format_error& e) {
            throw external_model_error(std::string("external denoiser: ") + e.what());
        }
        (void)x_t;
    }

    CTensor query_process(const CTensor& x_t, std::size_t t) const {
        if (write_fd_ < 0)
            throw external_model_error("external denoiser: no process attached");
        std::ostringstream req;
        const std::uint32_t t32 = static_cast<std::uint32_t>(t);
        req.write(reinterpret_cast<const char*>(&t32), 4);
        detail::save_tensor_stream(x_t, req);
        const std::string bytes = req.str();
        if (!write_all(bytes.data(), bytes.size()))
            throw external_model_error("external denoiser: write failed (process gone?)");
        return read_tensor_response();
    }

    bool write_all(const char* p, std::size_t n) const {
        while (n > 0) {
            const ssize_t w = ::write(write_fd_, p, n);
            if (w <= 0) return false;
            p += w;
            n -= static_cast<std::size_t>(w);
        }
        return true;
    }

    void read_exact(void* dst, std::size_t n) const {
        char* p = static_cast<char*>(dst);
        while (n > 0) {
            pollfd pfd{read_fd_, POLLIN, 0};
            const int pr = ::poll(&pfd, 1, timeout_ms_);
            if (pr == 0) throw external_model_error("external denoiser: timeout");
            if (pr < 0) throw external_model_error("external denoiser: poll failed");
            const ssize_t r = ::read(read_fd_, p, n);
            if (r <= 0)
                throw external_model_error("external denoiser: stream closed mid-record");
            p += r;
            n -= static_cast<std::size_t>(r);
        }
    }

    CTensor read_tensor_response() const {
        char magic[4];
        read_exact(magic, 4);
        if (std::memcmp(magic, detail::kTensorMagic, 4) != 0)
            throw external_model_error("external denoiser: bad magic in response");
        std::uint8_t tag, rank;
        read_exact(&tag, 1);
        read_exact(&rank, 1);
        if (tag != 0 && tag != 1)
            throw external_model_error("external denoiser: bad dtype tag");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::uint32_t dim;
            read_exact(&dim, 4);
            if (dim == 0)
                throw external_model_error("external denoiser: zero dimension");
            d = dim;
        }
        if (tag == 1) {
            CTensor t(shape);
            read_exact(t.data(), t.size() * sizeof(cdouble));
            return t;
        }
        RTensor t(shape);
        read_exact(t.data(), t.size() * sizeof(double));
        return to_complex(t);
    }

    void close_handles() {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        if (pid_ > 0) {
            int status;
            if (waitpid(pid_, &status, WNOHANG) == 0) {
                kill(pid_, SIGTERM);
                waitpid(pid_, &status, 0);
            }
        }
        pid_ = -1;
        write_fd_ = read_fd_ = -1;
    }

    std::string dir_;
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    int timeout_ms_ = 10000;
};

}  // namespace bgdm
