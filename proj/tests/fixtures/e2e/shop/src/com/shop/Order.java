package com.shop;

public class Order {
    private final double price;
    private final int quantity;

    public Order(double price, int quantity) {
        this.price = price;
        this.quantity = quantity;
    }

    public double total() {
        double base = price * quantity;
        double discount = 0;
        if (quantity > 10) {
            discount = base * 0.1;
        }
        return base - discount;
    }

    public String describe() {
        return quantity + " x " + price;
    }
}
