#include "contdt/dt/config.hpp"

#include <cmath>
#include <string>

#include "contdt/errors.hpp"

namespace contdt {

void DTConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("DTConfig: " + m); };
    if (context_len < 1) fail("context_len must be >= 1");
    if (n_layers < 1) fail("n_layers must be >= 1");
    if (n_heads < 1) fail("n_heads must be >= 1");
    if (embed_dim < 2) fail("embed_dim must be >= 2");
    if (embed_dim % n_heads != 0) fail("embed_dim must be divisible by n_heads");
    if (mlp_dim < 1) fail("mlp_dim must be >= 1");
    if (state_dim < 1 || action_dim < 1) fail("state_dim and action_dim must be >= 1");
    if (max_timestep < 1) fail("max_timestep must be >= 1");
    if (!(action_bound > 0) || !std::isfinite(action_bound)) fail("action_bound must be positive");
    if (!(rtg_scale > 0) || !std::isfinite(rtg_scale)) fail("rtg_scale must be positive");
}

std::size_t parameter_count(const DTConfig& cfg) {
    const std::size_t h = cfg.embed_dim, d = cfg.mlp_dim;
    const std::size_t s = cfg.state_dim, a = cfg.action_dim, t = cfg.max_timestep;
    const std::size_t head = (h + h) + (h * s + h) + (h * a + h) + t * h + 2 * h + (a * h + a);
    const std::size_t block = 4 * h * h + 2 * h + (d * h + d) + (h * d + h) + 2 * h;
    return head + static_cast<std::size_t>(cfg.n_layers) * block;
}

}  // namespace contdt
