#pragma once

#include "oms/error.hpp"
#include "oms/params.hpp"
#include "oms/hilbert.hpp"
#include "oms/rng.hpp"
#include "oms/liouvillian.hpp"
#include "oms/meanfield.hpp"
#include "oms/master.hpp"
#include "oms/trajectory.hpp"
#include "oms/switching.hpp"
#include "oms/twostate.hpp"
#include "oms/spectra.hpp"
#include "oms/linear.hpp"
#include "oms/io.hpp"
#include "oms/config.hpp"
