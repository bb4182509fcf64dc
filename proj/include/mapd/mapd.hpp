#pragma once

#include "mapd/grid_model.hpp"
#include "mapd/io.hpp"
#include "mapd/kinematics.hpp"
#include "mapd/reservation_table.hpp"
#include "mapd/scenario.hpp"
#include "mapd/simulator.hpp"
#include "mapd/sippwrt.hpp"
#include "mapd/spacetime_astar.hpp"
#include "mapd/token_passing.hpp"
