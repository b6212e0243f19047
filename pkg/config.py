import os
from pathlib import Path
from typing import Any, Dict, List

from dotenv import load_dotenv

load_dotenv()


class Config:
    BASE_DIR = Path(__file__).parent
    DATA_DIR = Path(os.getenv("INTENTMOTION_DATA_DIR", str(BASE_DIR / "data")))
    RUNS_DIR = Path(os.getenv("INTENTMOTION_RUNS_DIR", str(BASE_DIR / "runs")))
    LOGS_DIR = Path(os.getenv("INTENTMOTION_LOGS_DIR", str(BASE_DIR / "logs")))

    DATA_DIR.mkdir(parents=True, exist_ok=True)
    RUNS_DIR.mkdir(parents=True, exist_ok=True)
    LOGS_DIR.mkdir(parents=True, exist_ok=True)

    LOG_LEVEL = os.getenv("INTENTMOTION_LOG_LEVEL", "INFO")
    LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_FILE = LOGS_DIR / "intentmotion.log"

    SCHEMA_VERSION = "1.0"

    # skeleton / representation
    JOINT_COUNT = 55
    SHAPE_DIM = 10
    HAND_POINTS = 32
    SHAPE_WEIGHT_SEED = int(os.getenv("INTENTMOTION_SHAPE_WEIGHT_SEED", 7))

    # sequences
    PAST_FRAMES = int(os.getenv("INTENTMOTION_PAST_FRAMES", 4))
    SEQUENCE_FRAMES = int(os.getenv("INTENTMOTION_SEQUENCE_FRAMES", 15))
    EXPORT_FRAMES = int(os.getenv("INTENTMOTION_EXPORT_FRAMES", 30))
    RAW_FPS = 30.0
    RAW_MIN_FRAMES = 43
    RAW_MAX_FRAMES = 53

    # objects
    OBJECT_COUNT = 51
    MAX_OBJECT_VERTICES = 300
    OBJECT_VERTEX_SPACING = 0.01

    # conditioning / latent widths
    ACTION_EMBEDDING_DIM = 512
    CONDITION_DIM = 400
    ARM_LATENT_DIM = 32
    BODY_LATENT_DIM = 100

    # object optimizer
    CONTACT_THRESHOLD = float(os.getenv("INTENTMOTION_CONTACT_THRESHOLD", 0.005))
    SOLVER_MAX_ITERS = int(os.getenv("INTENTMOTION_SOLVER_MAX_ITERS", 1200))
    SOLVER_LR = float(os.getenv("INTENTMOTION_SOLVER_LR", 1e-3))
    LAMBDA_DISTANCE = 1.0
    LAMBDA_CONTACT = 0.005
    LAMBDA_REGULARIZER = 0.005
    SWITCH_PROXIMITY = 0.1

    # evaluation
    CLASSIFIER_HIDDEN = 128
    DIVERSITY_PAIRS = 200
    MULTIMODALITY_PAIRS = 20
    EVALUATION_REPEATS = int(os.getenv("INTENTMOTION_EVALUATION_REPEATS", 20))

    DEFAULT_VAL_SUBJECT = "S1"
    DISCARDED_INTENTS = ["lift"]
    HELD_OUT_PAIR = ("offhand", 0)

    SUPPORTED_INTENTS = {
        "drink": {"family": "use", "key_pose": "to_head", "hands": ["right"]},
        "eat": {"family": "use", "key_pose": "to_head", "hands": ["right"]},
        "call": {"family": "use", "key_pose": "to_head", "hands": ["right"]},
        "wear": {"family": "use", "key_pose": "to_head", "hands": ["right"]},
        "brush": {"family": "use", "key_pose": "to_head", "hands": ["right"]},
        "inspect": {"family": "use", "key_pose": "inspect", "hands": ["right"]},
        "see": {"family": "use", "key_pose": "inspect", "hands": ["right"]},
        "squeeze": {"family": "use", "key_pose": "inspect", "hands": ["right"]},
        "play": {"family": "use", "key_pose": "inspect", "hands": ["right"]},
        "pour": {"family": "use", "key_pose": "extend_forward", "hands": ["right"]},
        "toast": {"family": "use", "key_pose": "extend_forward", "hands": ["right"]},
        "take_picture": {"family": "use", "key_pose": "extend_forward", "hands": ["right"]},
        "pass": {"family": "pass", "key_pose": "extend_forward", "hands": ["right"]},
        "offhand": {"family": "offhand", "key_pose": "meet", "hands": ["right", "left"]},
    }

    @classmethod
    def get_intent_config(cls, intent: str) -> Dict[str, Any]:
        return cls.SUPPORTED_INTENTS.get(intent, {})

    @classmethod
    def is_intent_supported(cls, intent: str) -> bool:
        return intent in cls.SUPPORTED_INTENTS and intent not in cls.DISCARDED_INTENTS

    @classmethod
    def get_all_supported_intents(cls) -> List[str]:
        return list(cls.SUPPORTED_INTENTS.keys())


config = Config()
