#pragma once

#include "align.hpp"
#include "checkpoint.hpp"
#include "common.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "evaluation.hpp"
#include "features.hpp"
#include "inference.hpp"
#include "niw.hpp"
#include "synthetic_signal.hpp"
