from .datasets import (load_dataset, pad_point_cloud, pose_labels, read_blob, read_predictions, write_blob,
                       write_dataset, write_predictions)
from .normalization import (NormalizationRecord, apply_normalization, fit_normalization, load_record, normalize,
                            save_record)
from .simulator import (SimulatorConfig, bone_contributions, build_synthetic_benchmark, load_simulator_config,
                        load_truth, make_simulator_config, random_pose, save_simulator_config, simulate_rf)
from .splits import SPLIT_MODES, make_splits
