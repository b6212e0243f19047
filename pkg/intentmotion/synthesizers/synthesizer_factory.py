import logging
from typing import List, Optional

from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.action_vocabulary import ActionVocabulary
from intentmotion.models.generator_config import GeneratorConfig
from intentmotion.synthesizers.base_synthesizer import BaseSynthesizer
from intentmotion.synthesizers.decoupled_synthesizer import DecoupledSynthesizer
from intentmotion.synthesizers.fused_synthesizer import FusedSynthesizer

logger = logging.getLogger(__name__)


class SynthesizerFactory:
    def __init__(self):
        self._synthesizers = {
            "decoupled": DecoupledSynthesizer,
            "fused": FusedSynthesizer,
        }

    def get_synthesizer(
        self,
        generator_config: GeneratorConfig,
        skeleton: Skeleton,
        vocabulary: ActionVocabulary,
        kind: Optional[str] = None,
    ) -> BaseSynthesizer:
        kind = kind or generator_config.synthesizer_type
        if kind not in self._synthesizers:
            raise ValueError(f"Unsupported synthesizer: {kind}. Supported: {list(self._synthesizers.keys())}")
        return self._synthesizers[kind](generator_config, skeleton, vocabulary)

    def get_supported_synthesizers(self) -> List[str]:
        return list(self._synthesizers.keys())

    def register_synthesizer(self, kind: str, synthesizer_class):
        if not issubclass(synthesizer_class, BaseSynthesizer):
            raise ValueError("Synthesizer class must inherit from BaseSynthesizer")

        self._synthesizers[kind] = synthesizer_class
        logger.info(f"Registered new synthesizer: {kind}")


synthesizer_factory = SynthesizerFactory()
