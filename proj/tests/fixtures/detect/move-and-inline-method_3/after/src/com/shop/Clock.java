package com.shop;

class Clock {
}
