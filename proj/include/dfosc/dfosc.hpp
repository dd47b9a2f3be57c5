#pragma once

#include "dfosc/error.hpp"
#include "dfosc/nonlin.hpp"
#include "dfosc/dfcore.hpp"
#include "dfosc/linblock.hpp"
#include "dfosc/predict.hpp"
#include "dfosc/simulate.hpp"
#include "dfosc/csv.hpp"
#include "dfosc/config.hpp"
