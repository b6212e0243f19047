from pydantic import BaseModel, Field

from config import config


class SolverConfig(BaseModel):
    tau: float = Field(default=config.CONTACT_THRESHOLD, gt=0)
    lambda_distance: float = Field(default=config.LAMBDA_DISTANCE, ge=0)
    lambda_contact: float = Field(default=config.LAMBDA_CONTACT, ge=0)
    lambda_regularizer: float = Field(default=config.LAMBDA_REGULARIZER, ge=0)
    max_iters: int = Field(default=config.SOLVER_MAX_ITERS, ge=0)
    lr: float = Field(default=config.SOLVER_LR, gt=0)
    lr_patience: int = Field(default=10, gt=0)
    residual_tolerance: float = Field(default=1e-5, gt=0)
    stall_tolerance: float = Field(default=1e-8, ge=0)
    stall_iterations: int = Field(default=20, gt=0)
    initial_tolerance: float = Field(default=1e-10, ge=0)
    switch_proximity: float = Field(default=config.SWITCH_PROXIMITY, gt=0)
    allow_fallback: bool = True
    optimize_wrist: bool = False

    def weights(self) -> dict:
        return {
            "lambda_distance": self.lambda_distance,
            "lambda_contact": self.lambda_contact,
            "lambda_regularizer": self.lambda_regularizer,
        }

    def weighted_total(self, e_d, e_c, e_r):
        return self.lambda_distance * e_d + self.lambda_contact * e_c + self.lambda_regularizer * e_r
