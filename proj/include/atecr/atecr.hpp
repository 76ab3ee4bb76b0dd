#pragma once

#include "atecr/cif.hpp"
#include "atecr/cox.hpp"
#include "atecr/csv.hpp"
#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"
#include "atecr/parallel.hpp"
#include "atecr/report.hpp"
#include "atecr/resample.hpp"
#include "atecr/rng.hpp"
#include "atecr/sim.hpp"
#include "atecr/stats.hpp"
#include "atecr/svg.hpp"
#include "atecr/wild.hpp"
