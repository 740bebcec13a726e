"""
Django settings for chemotaxis_project project.

Generated by 'django-admin startproject' using Django 5.0.

The project has no web surface: it hosts the `confinement` app, whose
management commands run the numerical toolkit and record each run.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

from pathlib import Path
import os
import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'chemotaxis-local-only')
DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'confinement',
]

ROOT_URLCONF = 'chemotaxis_project.urls'

MIDDLEWARE = [
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]


# Database
# Run records only. DATABASE_URL from the environment, sqlite next to the project otherwise.
DATABASES = {
    'default': dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
    )
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Toolkit defaults. Every RunConfig field falls back to these values;
# the command line and config files override them per run.
CHEMOTAXIS = {
    'chi': float(os.environ.get('CHEMOTAXIS_CHI', '0.5')),
    'n_half': int(os.environ.get('CHEMOTAXIS_N_HALF', '16')),
    'rule': 'gauss',
    'nx': int(os.environ.get('CHEMOTAXIS_NX', '400')),
    'L': 0.0,  # 0 means "derive from beta" (10/beta for the Milne half-line)
    'box_L': 6.0,
    'epsilon': 0.0,
    'epsilon0': 0.5,
    'continuation_steps': 6,
    'root_tol': 1e-13,
    'fixed_point_tol': 1e-11,
    'eigen_tol': 1e-10,
    'max_iter': 20000,
    'eigen_max_iter': 200,
    't_end': 200.0,
    'cfl': 0.9,
    'scheme': 'strang',
    'ic': 'uniform',
    'variant': 'weak-bias',
    'hypo_nx': 60,
    'hypo_n_half': 6,
    'hypo_L': 4.0,
    'entropy_epsilon': 0.1,
    'output_dir': os.environ.get('CHEMOTAXIS_OUTPUT', str(BASE_DIR / 'runs')),
    'seed': int(os.environ.get('CHEMOTAXIS_SEED', '20240101')),
    'n_jobs': int(os.environ.get('CHEMOTAXIS_JOBS', '1')),
}


# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'confinement': {
            'handlers': ['console'],
            'level': os.environ.get('CHEMOTAXIS_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}
