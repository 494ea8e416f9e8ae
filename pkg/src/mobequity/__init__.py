"""mobequity: home-neighborhood inference and data-equity metrics for GPS pings."""

from .geo import GeoPoint, Polygon, build_index, haversine_distance, locate, parse_wkt, polygon_contains
from .home import Cluster, HomeAssignment, HomeRejection, assign_week_home, complete_linkage_cluster, nightly_dwell, weekly_home_counts
from .ingest import BlockGroup, PingRecord, classify, load_block_groups, parse_pings, partition_by_device
from .metrics import census_correlation, device_week_precision, device_week_quantity, quantile_bins, representativeness
from .staypoints import StayPoint, detect_stay_points, staypoint_block_group
from .stats import MedianCI, TestResult, median_ci, moods_median_test, pearson, stars
from .synth import SynthClass, SynthConfig, TruthManifest, generate
from .timeutil import StudyWindow

__version__ = "0.1.0"
