#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <torch/torch.h>

#include "facecycle/log.hpp"

int main(int argc, char** argv) {
    facecycle::log::set_level(facecycle::log::Level::warn);
    torch::set_num_threads(1);
    doctest::Context context(argc, argv);
    return context.run();
}
