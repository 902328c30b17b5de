#pragma once

#include "zfa/config.hpp"
#include "zfa/data.hpp"
#include "zfa/errors.hpp"
#include "zfa/estimator.hpp"
#include "zfa/io.hpp"
#include "zfa/model.hpp"
#include "zfa/plot.hpp"
#include "zfa/scores.hpp"
#include "zfa/simulate.hpp"
#include "zfa/svd.hpp"
#include "zfa/types.hpp"
