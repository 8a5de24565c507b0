// Minimal external denoiser for protocol tests. Reads (u32 t, tensor)
// requests from stdin and writes one tensor per request to stdout.
//
// Modes:
//   zeros            respond with a zero tensor of the request shape
//   stdnormal T BMIN BMAX
//                    respond with sqrt(1 - alpha_bar_t) * x_t, the analytic
//                    noise prediction for a standard-normal prior
//   malformed        respond with garbage bytes (error-path testing)

#include <cstdint>
#include <cstring>
#include <iostream>
#include <string>

#include "bgdm/schedule.hpp"
#include "bgdm/tensor_io.hpp"

using namespace bgdm;

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "zeros";
    NoiseSchedule schedule;
    if (mode == "stdnormal") {
        if (argc < 5) {
            std::cerr << "stdnormal mode needs T beta_min beta_max\n";
            return 2;
        }
        schedule = make_linear_schedule(std::stoul(argv[2]), std::stod(argv[3]),
                                        std::stod(argv[4]));
    }

    for (;;) {
        std::uint32_t t = 0;
        std::cin.read(reinterpret_cast<char*>(&t), 4);
        if (std::cin.gcount() == 0) return 0;  // clean EOF between requests
        if (std::cin.gcount() != 4) return 1;
        CTensor x;
        try {
            x = detail::load_tensor_stream<cdouble>(std::cin);
        } catch (const format_error&) {
            return 1;
        }

        if (mode == "malformed") {
            std::cout << "NOPE this is not a tensor";
            std::cout.flush();
            return 0;
        }
        CTensor eps(x.shape());
        if (mode == "stdnormal") {
            const double s = schedule.sigma[t];
            for (std::size_t i = 0; i < x.size(); ++i) eps[i] = s * x[i];
        }
        detail::save_tensor_stream(eps, std::cout);
        std::cout.flush();
    }
}
