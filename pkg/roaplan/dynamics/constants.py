GRAVITY = 9.81

# veículo de referência do modelo single-track
CAR_MASS = 1093.3
CAR_YAW_INERTIA = 1791.6
CAR_LF = 1.156
CAR_LR = 1.422
CAR_CSF = 20.89
CAR_CSR = 20.89
CAR_MIN_SPEED = 0.5

# pogobot, por unidade de massa
POGO_REST_LENGTH = 0.5
POGO_STIFFNESS = 400.0

# compass-gait
WALKER_MASS = 5.0
WALKER_LEG = 1.0
WALKER_COM = 0.5
WALKER_INERTIA = WALKER_MASS * WALKER_LEG ** 2 / 12.0
