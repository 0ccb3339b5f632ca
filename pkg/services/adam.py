"""
services/adam.py - Adam optimizer over a single latent vector
"""
import numpy as np


class Adam:
    """
    Adam with bias-corrected first and second moment estimates.

    The moments are kept across steps even when the caller projects the
    parameters back onto a constraint set between steps.
    """

    def __init__(self, learning_rate=0.005, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not learning_rate > 0.0:
            raise ValueError(f"Invalid learning rate: {learning_rate}")
        if not 0.0 <= beta1 < 1.0:
            raise ValueError(f"Invalid beta1: {beta1}")
        if not 0.0 <= beta2 < 1.0:
            raise ValueError(f"Invalid beta2: {beta2}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grad):
        """
        Return the updated parameters for one Adam step.

        Args:
            params (np.ndarray): Current parameters.
            grad (np.ndarray): Gradient of the objective at params.

        Returns:
            np.ndarray: New parameters (params is not modified).
        """
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1

        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)

        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
