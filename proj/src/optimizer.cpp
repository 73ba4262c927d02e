#include "uareg/optimizer.hpp"

namespace uareg {

void validate(const AdamWConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw Error("optimizer: lr must be > 0");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        throw Error("optimizer: betas must lie in [0, 1)");
    if (!(cfg.eps > 0.0)) throw Error("optimizer: eps must be > 0");
    if (cfg.weight_decay < 0.0) throw Error("optimizer: weight_decay must be >= 0");
}

} // namespace uareg
