#ifndef LMSAVG_LMSAVG_HPP
#define LMSAVG_LMSAVG_HPP

#include "lmsavg/asymptotics.hpp"
#include "lmsavg/errors.hpp"
#include "lmsavg/io.hpp"
#include "lmsavg/moments.hpp"
#include "lmsavg/operator_algebra.hpp"
#include "lmsavg/rng.hpp"
#include "lmsavg/sampling.hpp"
#include "lmsavg/sgd_engine.hpp"
#include "lmsavg/step_size.hpp"
#include "lmsavg/svg_plot.hpp"

#endif // LMSAVG_LMSAVG_HPP
